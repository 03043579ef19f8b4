#include "plastiq/backend.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace plastiq {

std::string_view to_string(FrameStatus status) {
  switch (status) {
    case FrameStatus::kOk: return "ok";
    case FrameStatus::kTimeout: return "timeout";
    case FrameStatus::kFailed: return "failed";
  }
  return "failed";
}

void precise_wait_until(Clock::time_point deadline) {
  using namespace std::chrono_literals;
  const auto coarse = deadline - 200us;
  if (Clock::now() < coarse) std::this_thread::sleep_until(coarse);
  while (Clock::now() < deadline) {
  }
}

// ---------------------------------------------------------------------------
// Replay

ReplayBackend::ReplayBackend(std::span<const ImageDetection> detections,
                             ReplayConfig config)
    : config_(config) {
  for (const auto& d : detections) table_[d.image_id].push_back(d.det);
}

std::vector<DetectOutcome> ReplayBackend::detect_batch(
    std::span<const DetectRequest> batch) {
  std::vector<DetectOutcome> out;
  out.reserve(batch.size());
  for (const auto& request : batch) {
    const auto start = Clock::now();
    DetectOutcome o;
    o.frame_id = request.frame_id;
    const std::string key = request.image_id.empty()
                                ? std::to_string(request.frame_id)
                                : request.image_id;
    auto it = table_.find(key);
    if (it == table_.end() && !request.image_id.empty()) {
      it = table_.find(std::filesystem::path(request.image_id).stem().string());
    }
    if (it != table_.end()) {
      o.detections = it->second;
    } else {
      ++missing_;
    }
    if (config_.delay.count() > 0.0) {
      precise_wait_until(start + std::chrono::duration_cast<Clock::duration>(config_.delay));
    }
    o.completed = Clock::now();
    o.model_latency_ms =
        std::chrono::duration<double, std::milli>(o.completed - start).count();
    out.push_back(std::move(o));
  }
  return out;
}

// ---------------------------------------------------------------------------
// File-descriptor transport

namespace {

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

}  // namespace

FdChannel::FdChannel(int read_fd, int write_fd)
    : read_fd_(read_fd), write_fd_(write_fd) {
  ignore_sigpipe();
}

FdChannel::~FdChannel() {
  close_write();
  if (read_fd_ >= 0) ::close(read_fd_);
}

void FdChannel::close_write() {
  if (write_fd_ < 0) return;
  if (write_fd_ == read_fd_) {
    ::shutdown(write_fd_, SHUT_WR);
  } else {
    ::close(write_fd_);
  }
  write_fd_ = -1;
}

void FdChannel::write_line(std::string_view line) {
  if (write_fd_ < 0) throw SessionError("channel closed for writing");
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(write_fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw SessionError(std::string("connection lost: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> FdChannel::read_line(Clock::time_point deadline) {
  for (;;) {
    if (auto line = buffer_.pop()) return line;
    const auto now = Clock::now();
    if (now >= deadline) return std::nullopt;
    const auto wait = std::chrono::ceil<std::chrono::milliseconds>(deadline - now);
    pollfd pfd{read_fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(wait.count(), 1 << 30)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw SessionError(std::string("poll failed: ") + std::strerror(errno));
    }
    if (rc == 0) continue;
    char chunk[65536];
    const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw SessionError(std::string("connection lost: ") + std::strerror(errno));
    }
    if (n == 0) throw SessionError("connection lost: detector closed its output");
    buffer_.feed({chunk, static_cast<std::size_t>(n)});
  }
}

ProcessChannel::ProcessChannel(int read_fd, int write_fd, int pid)
    : FdChannel(read_fd, write_fd), pid_(pid) {}

std::unique_ptr<ProcessChannel> ProcessChannel::spawn(const std::string& command) {
  ignore_sigpipe();
  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw SessionError("pipe failed");
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw SessionError("pipe failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
    throw SessionError("fork failed");
  }
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::unique_ptr<ProcessChannel>(
      new ProcessChannel(from_child[0], to_child[1], pid));
}

ProcessChannel::~ProcessChannel() {
  close_write();
  // Give the child a moment to exit on EOF before terminating it.
  for (int i = 0; i < 100; ++i) {
    if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ::kill(pid_, SIGTERM);
  ::waitpid(pid_, nullptr, 0);
}

std::unique_ptr<FdChannel> connect_tcp(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const auto port_text = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), port_text.c_str(), &hints, &res); rc != 0) {
    throw SessionError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw SessionError("cannot connect to " + host + ":" + port_text);
  return std::make_unique<FdChannel>(fd, fd);
}

// ---------------------------------------------------------------------------
// External backend

ExternalBackend::ExternalBackend(std::unique_ptr<LineChannel> channel,
                                 ExternalConfig config)
    : channel_(std::move(channel)), config_(config) {
  if (config_.window == 0) throw std::invalid_argument("pipeline window must be positive");
}

std::vector<DetectOutcome> ExternalBackend::detect_batch(
    std::span<const DetectRequest> batch) {
  if (error_) throw SessionError("session aborted: " + *error_);

  std::vector<DetectOutcome> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!sent_.insert(batch[i].frame_id).second) {
      throw std::invalid_argument("frame id " + std::to_string(batch[i].frame_id) +
                                  " reused within a session");
    }
    out[i].frame_id = batch[i].frame_id;
    out[i].status = FrameStatus::kFailed;
  }

  struct Pending {
    std::size_t index;
    Clock::time_point deadline;
  };
  std::unordered_map<std::uint64_t, Pending> pending;
  std::size_t next = 0;

  try {
    while (next < batch.size() || !pending.empty()) {
      while (next < batch.size() && pending.size() < config_.window) {
        channel_->write_line(encode_request(batch[next]));
        pending.emplace(batch[next].frame_id, Pending{next, Clock::now() + config_.timeout});
        ++next;
      }
      auto earliest = Clock::time_point::max();
      for (const auto& [id, p] : pending) earliest = std::min(earliest, p.deadline);

      const auto line = channel_->read_line(earliest);
      if (!line) {
        const auto now = Clock::now();
        for (auto it = pending.begin(); it != pending.end();) {
          if (it->second.deadline <= now) {
            out[it->second.index].status = FrameStatus::kTimeout;
            out[it->second.index].completed = now;
            timed_out_.insert(it->first);
            it = pending.erase(it);
          } else {
            ++it;
          }
        }
        continue;
      }
      if (line->empty()) continue;
      auto response = decode_response(*line);
      const auto it = pending.find(response.frame_id);
      if (it == pending.end()) {
        if (timed_out_.count(response.frame_id)) continue;
        throw ProtocolError("response for unknown frame_id " +
                            std::to_string(response.frame_id));
      }
      auto& o = out[it->second.index];
      o.status = FrameStatus::kOk;
      o.detections = std::move(response.detections);
      o.model_latency_ms = response.latency_ms;
      o.completed = Clock::now();
      pending.erase(it);
    }
  } catch (const SessionError& e) {
    error_ = e.what();
    const auto now = Clock::now();
    for (auto& o : out) {
      if (o.status == FrameStatus::kFailed) o.completed = now;
    }
  }
  return out;
}

std::unique_ptr<ExternalBackend> make_external_backend(std::string_view endpoint,
                                                       ExternalConfig config) {
  if (endpoint.starts_with("exec:")) {
    return std::make_unique<ExternalBackend>(
        ProcessChannel::spawn(std::string(endpoint.substr(5))), config);
  }
  if (endpoint.starts_with("tcp:")) {
    const auto rest = endpoint.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string_view::npos) {
      throw std::invalid_argument("tcp endpoint must be tcp:<host>:<port>");
    }
    int port = 0;
    try {
      port = std::stoi(std::string(rest.substr(colon + 1)));
    } catch (const std::exception&) {
      throw std::invalid_argument("invalid port in endpoint");
    }
    return std::make_unique<ExternalBackend>(
        connect_tcp(std::string(rest.substr(0, colon)), port), config);
  }
  throw std::invalid_argument("endpoint must start with exec: or tcp:");
}

}  // namespace plastiq
