// Loopback scorer speaking the newline-delimited JSON protocol on
// stdin/stdout. Used by the test suites and handy as a template for wrapping
// a real model.
//
//   lime_shift_echo_scorer [--mode MODE] [--value C] [--weights id:c,...]
//                          [--bias B] [--batch N] [--chatter]
//
// Modes: logistic (default), constant, linear, unnormalized, bad-id,
//        garbage, reverse, silent.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace {

struct Options {
  std::string mode = "logistic";
  double value = 0.5;
  double bias = 0.5;
  std::map<std::uint32_t, double> weights;
  std::size_t batch = 1;
  bool chatter = false;
};

Options parse(int argc, char** argv) {
  Options o;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    auto next = [&]() -> std::string {
      if (i + 1 >= argc) {
        std::cerr << "missing value for " << a << "\n";
        std::exit(2);
      }
      return argv[++i];
    };
    if (a == "--mode") {
      o.mode = next();
    } else if (a == "--value") {
      o.value = std::stod(next());
    } else if (a == "--bias") {
      o.bias = std::stod(next());
    } else if (a == "--batch") {
      o.batch = std::stoul(next());
    } else if (a == "--chatter") {
      o.chatter = true;
    } else if (a == "--weights") {
      std::string spec = next();
      std::size_t pos = 0;
      while (pos < spec.size()) {
        auto comma = spec.find(',', pos);
        if (comma == std::string::npos) comma = spec.size();
        const std::string item = spec.substr(pos, comma - pos);
        const auto colon = item.find(':');
        o.weights[static_cast<std::uint32_t>(std::stoul(item.substr(0, colon)))] =
            std::stod(item.substr(colon + 1));
        pos = comma + 1;
      }
    } else {
      std::cerr << "unknown flag " << a << "\n";
      std::exit(2);
    }
  }
  return o;
}

double positive_score(const Options& o, const nlohmann::json& req) {
  const auto idx = req.at("indices").get<std::vector<std::uint32_t>>();
  const auto val = req.at("values").get<std::vector<double>>();
  if (o.mode == "constant") return o.value;
  if (o.mode == "linear") {
    double p = o.bias;
    for (auto i : idx) {
      if (auto it = o.weights.find(i); it != o.weights.end()) p += it->second;
    }
    return std::clamp(p, 0.0, 1.0);
  }
  double s = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) s += (idx[k] % 2 == 0 ? 0.1 : -0.1) * val[k];
  return 1.0 / (1.0 + std::exp(-s));
}

std::string respond(const Options& o, const nlohmann::json& req) {
  const auto id = req.at("id").get<std::uint64_t>();
  if (o.mode == "garbage") return "this is not json";
  nlohmann::ordered_json out;
  out["id"] = o.mode == "bad-id" ? id + 1000000 : id;
  if (o.mode == "unnormalized") {
    out["scores"] = {0.6, 0.6};
  } else {
    const double p = positive_score(o, req);
    out["scores"] = {1.0 - p, p};
  }
  return out.dump();
}

}  // namespace

int main(int argc, char** argv) {
  const Options opts = parse(argc, argv);
  std::ios::sync_with_stdio(false);
  std::vector<std::string> held;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    if (opts.mode == "silent") continue;
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "echo scorer: bad request: " << e.what() << "\n";
      continue;
    }
    if (opts.chatter) std::cerr << "echo scorer: request " << req.value("id", 0ULL) << "\n";
    held.push_back(respond(opts, req));
    const std::size_t batch = opts.mode == "reverse" ? std::max<std::size_t>(opts.batch, 1) : 1;
    if (held.size() >= batch) {
      for (auto it = held.rbegin(); it != held.rend(); ++it) std::cout << *it << '\n';
      std::cout.flush();
      held.clear();
    }
  }
  for (auto it = held.rbegin(); it != held.rend(); ++it) std::cout << *it << '\n';
  std::cout.flush();
  return 0;
}
