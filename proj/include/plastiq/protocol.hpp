#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "plastiq/dataset.hpp"

namespace plastiq {

/// Fatal failure of a detector session (connection loss, remote error).
class SessionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Peer violated the wire protocol. Also fatal to the session.
class ProtocolError : public SessionError {
 public:
  using SessionError::SessionError;
};

struct DetectRequest {
  std::uint64_t frame_id = 0;
  /// Key used by replay backends; not sent on the wire.
  std::string image_id;
  std::string path;
  ImageDims dims;
};

struct DetectResponse {
  std::uint64_t frame_id = 0;
  std::vector<Detection> detections;
  double latency_ms = 0.0;
};

// Wire protocol v1: newline-delimited JSON.
//   request  {"frame_id":int,"path":string,"width":int,"height":int}
//   response {"frame_id":int,"detections":[{"class":int,"x_min":f,"y_min":f,
//             "x_max":f,"y_max":f,"score":f}],"latency_ms":float}
// A line beginning with {"error": aborts the session.

/// Encoded line including the trailing newline.
std::string encode_request(const DetectRequest& request);
DetectRequest decode_request(std::string_view line);

std::string encode_response(const DetectResponse& response);

/// Throws SessionError for an error line and ProtocolError for anything
/// that is not a well-formed response.
DetectResponse decode_response(std::string_view line);

/// Reassembles newline-terminated lines from arbitrarily split byte chunks.
class LineBuffer {
 public:
  explicit LineBuffer(std::size_t max_line = 1 << 24) : max_line_(max_line) {}

  void feed(std::string_view bytes);
  /// Next complete line without its terminator ("\r\n" is accepted).
  std::optional<std::string> pop();
  std::size_t buffered() const { return buffer_.size() - start_; }

 private:
  std::string buffer_;
  std::size_t start_ = 0;
  std::size_t max_line_;
};

}  // namespace plastiq
