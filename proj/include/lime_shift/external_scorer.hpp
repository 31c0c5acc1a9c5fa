#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <future>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "lime_shift/blackbox.hpp"

namespace lime_shift {

// Encodes one request line (without the trailing newline).
inline std::string encode_request(std::uint64_t id, const SparseVector& x) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["dim"] = x.dim();
  j["indices"] = std::vector<std::uint32_t>(x.indices().begin(), x.indices().end());
  j["values"] = std::vector<double>(x.values().begin(), x.values().end());
  return j.dump();
}

struct DecodedResponse {
  std::uint64_t id = 0;
  std::vector<double> scores;
};

// Parses and validates one response line. Throws ProtocolError carrying the
// raw line on any defect.
inline DecodedResponse decode_response(const std::string& line, std::size_t n_classes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("malformed response: not JSON", line);
  }
  if (!j.is_object() || !j.contains("id") || !j["id"].is_number_unsigned() ||
      !j.contains("scores") || !j["scores"].is_array()) {
    throw ProtocolError("malformed response: expected {\"id\": uint, \"scores\": [...]}", line);
  }
  DecodedResponse r;
  r.id = j["id"].get<std::uint64_t>();
  for (const auto& s : j["scores"]) {
    if (!s.is_number()) throw ProtocolError("malformed response: non-numeric score", line);
    r.scores.push_back(s.get<double>());
  }
  if (r.scores.size() != n_classes) {
    throw ProtocolError("expected " + std::to_string(n_classes) + " scores, got " +
                            std::to_string(r.scores.size()),
                        line);
  }
  if (auto why = validate_scores(r.scores); !why.empty()) throw ProtocolError(why, line);
  return r;
}

// Talks to a child process over newline-delimited JSON on its stdin/stdout.
// Requests may be issued concurrently; responses are matched by id.
class ExternalScorer final : public Scorer {
 public:
  ExternalScorer(std::vector<std::string> argv, std::size_t dim, std::vector<int> class_ids = {0, 1},
                 std::chrono::milliseconds timeout = std::chrono::seconds(30))
      : argv_(std::move(argv)), dim_(dim), class_ids_(std::move(class_ids)), timeout_(timeout) {
    if (argv_.empty()) throw ConfigError("external scorer command is empty");
    static std::once_flag sigpipe_once;
    std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });
    spawn();
    reader_ = std::thread([this] { read_stdout(); });
    err_reader_ = std::thread([this] { read_stderr(); });
  }

  ExternalScorer(const ExternalScorer&) = delete;
  ExternalScorer& operator=(const ExternalScorer&) = delete;

  ~ExternalScorer() override {
    {
      std::lock_guard lk(write_mu_);
      if (to_child_ >= 0) ::close(to_child_);
      to_child_ = -1;
    }
    bool exited = false;
    for (int i = 0; i < 200 && !exited; ++i) {
      int status = 0;
      exited = ::waitpid(pid_, &status, WNOHANG) == pid_;
      if (!exited) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (!exited) {
      ::kill(pid_, SIGKILL);
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
    if (reader_.joinable()) reader_.join();
    if (err_reader_.joinable()) err_reader_.join();
    ::close(from_child_);
    ::close(err_from_child_);
  }

  std::size_t dim() const override { return dim_; }
  std::vector<int> class_ids() const override { return class_ids_; }

  ScoreVector score(const SparseVector& x) const override {
    auto fut = send(x);
    return await(fut.first, fut.second);
  }

  std::vector<ScoreVector> score_batch(std::span<const SparseVector> xs) const override {
    std::vector<std::pair<std::uint64_t, std::future<std::vector<double>>>> futs;
    futs.reserve(xs.size());
    for (const auto& x : xs) futs.push_back(send(x));
    std::vector<ScoreVector> out;
    out.reserve(xs.size());
    for (auto& [id, f] : futs) out.push_back(await(id, f));
    return out;
  }

  std::string describe() const override {
    std::string cmd;
    for (const auto& a : argv_) cmd += (cmd.empty() ? "" : " ") + a;
    return "external:" + cmd;
  }

 private:
  using Promise = std::promise<std::vector<double>>;

  void spawn() {
    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0 ||
        ::pipe2(err_pipe, O_CLOEXEC) != 0) {
      throw ConfigError(std::string("pipe failed: ") + std::strerror(errno));
    }
    pid_ = ::fork();
    if (pid_ < 0) throw ConfigError(std::string("fork failed: ") + std::strerror(errno));
    if (pid_ == 0) {
      ::dup2(in_pipe[0], STDIN_FILENO);
      ::dup2(out_pipe[1], STDOUT_FILENO);
      ::dup2(err_pipe[1], STDERR_FILENO);
      std::vector<char*> args;
      for (auto& a : argv_) args.push_back(a.data());
      args.push_back(nullptr);
      ::execvp(args[0], args.data());
      const char msg[] = "external scorer: exec failed\n";
      [[maybe_unused]] auto w = ::write(STDERR_FILENO, msg, sizeof msg - 1);
      ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    err_from_child_ = err_pipe[0];
  }

  std::pair<std::uint64_t, std::future<std::vector<double>>> send(const SparseVector& x) const {
    if (x.dim() != dim_) {
      throw ContractViolation("instance dim " + std::to_string(x.dim()) +
                              " does not match scorer dim " + std::to_string(dim_));
    }
    std::lock_guard lk(write_mu_);
    const std::uint64_t id = next_id_++;
    std::future<std::vector<double>> fut;
    {
      std::lock_guard pl(pending_mu_);
      if (broken_) std::rethrow_exception(broken_);
      fut = pending_[id].get_future();
    }
    const std::string line = encode_request(id, x) + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t w = ::write(to_child_, line.data() + off, line.size() - off);
      if (w < 0 && errno == EINTR) continue;
      if (w <= 0) {
        fail_all(std::make_exception_ptr(ProtocolError("scorer process closed its input", line)));
        break;
      }
      off += static_cast<std::size_t>(w);
    }
    return {id, std::move(fut)};
  }

  ScoreVector await(std::uint64_t id, std::future<std::vector<double>>& fut) const {
    if (fut.wait_for(timeout_) != std::future_status::ready) {
      std::lock_guard pl(pending_mu_);
      pending_.erase(id);
      throw ProtocolError("timeout waiting for response id " + std::to_string(id), "");
    }
    return {fut.get(), class_ids_};
  }

  void fail_all(std::exception_ptr err) const {
    std::lock_guard pl(pending_mu_);
    if (!broken_) broken_ = err;
    for (auto& [id, p] : pending_) p.set_exception(err);
    pending_.clear();
  }

  void dispatch(const std::string& line) {
    DecodedResponse r;
    std::uint64_t id = 0;
    bool have_id = false;
    try {
      auto j = nlohmann::json::parse(line);
      if (j.is_object() && j.contains("id") && j["id"].is_number_unsigned()) {
        id = j["id"].get<std::uint64_t>();
        have_id = true;
      }
    } catch (const nlohmann::json::exception&) {
    }
    std::lock_guard pl(pending_mu_);
    if (!have_id) {
      auto err = std::make_exception_ptr(
          ProtocolError("malformed response: no usable id", line));
      if (!broken_) broken_ = err;
      for (auto& [pid, p] : pending_) p.set_exception(err);
      pending_.clear();
      return;
    }
    auto it = pending_.find(id);
    if (it == pending_.end()) {
      auto err = std::make_exception_ptr(
          ProtocolError("response id " + std::to_string(id) + " matches no pending request", line));
      if (!broken_) broken_ = err;
      for (auto& [pid, p] : pending_) p.set_exception(err);
      pending_.clear();
      return;
    }
    try {
      r = decode_response(line, class_ids_.size());
      it->second.set_value(std::move(r.scores));
    } catch (const ProtocolError&) {
      it->second.set_exception(std::current_exception());
    }
    pending_.erase(it);
  }

  void read_stdout() {
    std::string buf;
    char chunk[65536];
    for (;;) {
      const ssize_t r = ::read(from_child_, chunk, sizeof chunk);
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(r));
      std::size_t start = 0;
      for (std::size_t nl; (nl = buf.find('\n', start)) != std::string::npos; start = nl + 1) {
        std::string line = buf.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) dispatch(line);
      }
      buf.erase(0, start);
    }
    fail_all(std::make_exception_ptr(ProtocolError("scorer process closed its output", buf)));
  }

  void read_stderr() {
    char chunk[4096];
    for (;;) {
      const ssize_t r = ::read(err_from_child_, chunk, sizeof chunk);
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) break;
      std::lock_guard lk(stderr_mu_);
      std::cerr.write(chunk, r);
      std::cerr.flush();
    }
  }

  std::vector<std::string> argv_;
  std::size_t dim_;
  std::vector<int> class_ids_;
  std::chrono::milliseconds timeout_;

  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  int err_from_child_ = -1;
  std::thread reader_;
  std::thread err_reader_;

  mutable std::mutex write_mu_;
  mutable std::mutex pending_mu_;
  mutable std::mutex stderr_mu_;
  mutable std::uint64_t next_id_ = 0;
  mutable std::unordered_map<std::uint64_t, Promise> pending_;
  mutable std::exception_ptr broken_;
};

// Splits a command line on whitespace; double quotes group words.
inline std::vector<std::string> split_command(const std::string& cmd) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false, any = false;
  for (char c : cmd) {
    if (c == '"') {
      quoted = !quoted;
      any = true;
    } else if (!quoted && (c == ' ' || c == '\t')) {
      if (any) out.push_back(cur);
      cur.clear();
      any = false;
    } else {
      cur += c;
      any = true;
    }
  }
  if (any) out.push_back(cur);
  return out;
}

}  // namespace lime_shift
