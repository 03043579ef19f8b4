#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "plastiq/evaluation.hpp"
#include "plastiq/protocol.hpp"

namespace plastiq {

using Clock = std::chrono::steady_clock;

enum class FrameStatus { kOk, kTimeout, kFailed };

std::string_view to_string(FrameStatus status);

struct DetectOutcome {
  std::uint64_t frame_id = 0;
  FrameStatus status = FrameStatus::kOk;
  std::vector<Detection> detections;
  /// Latency reported by the backend itself.
  double model_latency_ms = 0.0;
  Clock::time_point completed{};
};

/// A detector session. Outcomes come back in request order whatever order
/// the backend answered in.
class Detector {
 public:
  virtual ~Detector() = default;

  /// After a fatal session error the affected frames are marked kFailed,
  /// `session_error()` is set, and later calls throw SessionError.
  virtual std::vector<DetectOutcome> detect_batch(
      std::span<const DetectRequest> batch) = 0;

  virtual std::optional<std::string> session_error() const { return std::nullopt; }
};

struct ReplayConfig {
  /// Artificial per-frame model delay.
  std::chrono::duration<double, std::milli> delay{0.0};
};

/// Serves prerecorded detections keyed by image id (or the decimal frame id
/// when a request carries no image id). An image id with no entry of its own
/// falls back to its file stem, so "dir/im0.ppm" finds detections for "im0".
class ReplayBackend : public Detector {
 public:
  explicit ReplayBackend(std::span<const ImageDetection> detections,
                         ReplayConfig config = {});

  std::vector<DetectOutcome> detect_batch(
      std::span<const DetectRequest> batch) override;

  /// Requests whose key had no stored detections.
  std::size_t missing_keys() const { return missing_; }

 private:
  std::unordered_map<std::string, std::vector<Detection>> table_;
  ReplayConfig config_;
  std::size_t missing_ = 0;
};

/// Bidirectional line transport.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  /// `line` must include its terminator.
  virtual void write_line(std::string_view line) = 0;
  /// Returns nullopt once `deadline` passes. Throws SessionError on EOF.
  virtual std::optional<std::string> read_line(Clock::time_point deadline) = 0;
};

/// Channel over a pair of file descriptors (pipes or a socket).
class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd);
  ~FdChannel() override;
  FdChannel(const FdChannel&) = delete;
  FdChannel& operator=(const FdChannel&) = delete;

  void write_line(std::string_view line) override;
  std::optional<std::string> read_line(Clock::time_point deadline) override;

 protected:
  void close_write();

 private:
  int read_fd_;
  int write_fd_;
  LineBuffer buffer_;
};

/// Child process speaking the protocol on its stdin/stdout. The command runs
/// under /bin/sh -c.
class ProcessChannel : public FdChannel {
 public:
  static std::unique_ptr<ProcessChannel> spawn(const std::string& command);
  ~ProcessChannel() override;

 private:
  ProcessChannel(int read_fd, int write_fd, int pid);
  int pid_;
};

std::unique_ptr<FdChannel> connect_tcp(const std::string& host, int port);

struct ExternalConfig {
  std::size_t window = 32;
  std::chrono::milliseconds timeout{5000};
};

/// Pipelines requests to an out-of-process detector and matches responses
/// by frame id. Late answers to timed-out frames are discarded.
class ExternalBackend : public Detector {
 public:
  ExternalBackend(std::unique_ptr<LineChannel> channel, ExternalConfig config = {});

  std::vector<DetectOutcome> detect_batch(
      std::span<const DetectRequest> batch) override;

  std::optional<std::string> session_error() const override { return error_; }

  std::size_t timeouts() const { return timed_out_.size(); }

 private:
  std::unique_ptr<LineChannel> channel_;
  ExternalConfig config_;
  std::unordered_set<std::uint64_t> sent_;
  std::unordered_set<std::uint64_t> timed_out_;
  std::optional<std::string> error_;
};

/// `exec:<command>` or `tcp:<host>:<port>`.
std::unique_ptr<ExternalBackend> make_external_backend(std::string_view endpoint,
                                                       ExternalConfig config = {});

/// Sleeps until `deadline` with sub-scheduler-tick accuracy.
void precise_wait_until(Clock::time_point deadline);

}  // namespace plastiq
