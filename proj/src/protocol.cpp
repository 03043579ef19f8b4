#include "plastiq/protocol.hpp"

#include <json.hpp>

namespace plastiq {

using nlohmann::json;

std::string encode_request(const DetectRequest& request) {
  return "{\"frame_id\":" + std::to_string(request.frame_id) +
         ",\"path\":" + json(request.path).dump() +
         ",\"width\":" + std::to_string(request.dims.width) +
         ",\"height\":" + std::to_string(request.dims.height) + "}\n";
}

DetectRequest decode_request(std::string_view line) {
  try {
    const auto obj = json::parse(line);
    DetectRequest r;
    r.frame_id = obj.at("frame_id").get<std::uint64_t>();
    r.path = obj.at("path").get<std::string>();
    r.dims = {obj.at("width").get<int>(), obj.at("height").get<int>()};
    return r;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed request: ") + e.what());
  }
}

std::string encode_response(const DetectResponse& response) {
  nlohmann::ordered_json doc;
  doc["frame_id"] = response.frame_id;
  auto& dets = doc["detections"] = nlohmann::ordered_json::array();
  for (const auto& d : response.detections) {
    nlohmann::ordered_json item;
    item["class"] = d.class_id;
    item["x_min"] = d.box.x_min;
    item["y_min"] = d.box.y_min;
    item["x_max"] = d.box.x_max;
    item["y_max"] = d.box.y_max;
    item["score"] = d.score;
    dets.push_back(std::move(item));
  }
  doc["latency_ms"] = response.latency_ms;
  return doc.dump() + "\n";
}

DetectResponse decode_response(std::string_view line) {
  if (line.starts_with("{\"error\":")) {
    std::string message(line);
    try {
      const auto obj = json::parse(line);
      if (obj.at("error").is_string()) message = obj.at("error").get<std::string>();
    } catch (const json::exception&) {
    }
    throw SessionError("detector reported error: " + message);
  }

  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error&) {
    throw ProtocolError("malformed response line: " + std::string(line.substr(0, 120)));
  }
  const auto bad = [](const std::string& what) {
    return ProtocolError("invalid response: " + what);
  };
  if (!obj.is_object()) throw bad("expected object");
  const auto number = [&](const json& node, const char* key) {
    const auto it = node.find(key);
    if (it == node.end() || !it->is_number()) {
      throw bad(std::string("missing numeric field '") + key + "'");
    }
    return it->get<double>();
  };

  DetectResponse r;
  const auto id = obj.find("frame_id");
  if (id == obj.end() || !id->is_number_unsigned()) throw bad("frame_id");
  r.frame_id = id->get<std::uint64_t>();
  r.latency_ms = number(obj, "latency_ms");
  if (!(r.latency_ms >= 0.0)) throw bad("negative latency_ms");

  const auto dets = obj.find("detections");
  if (dets == obj.end() || !dets->is_array()) throw bad("detections");
  for (const auto& item : *dets) {
    if (!item.is_object()) throw bad("detection entry");
    const auto cls = item.find("class");
    if (cls == item.end() || !cls->is_number_integer()) throw bad("class");
    Detection d;
    d.class_id = cls->get<int>();
    d.score = number(item, "score");
    if (d.score < 0.0 || d.score > 1.0) throw bad("score outside [0,1]");
    try {
      d.box = clamp_marginal({number(item, "x_min"), number(item, "y_min"),
                              number(item, "x_max"), number(item, "y_max")});
    } catch (const GeometryError& e) {
      throw bad(e.what());
    }
    r.detections.push_back(d);
  }
  return r;
}

void LineBuffer::feed(std::string_view bytes) {
  if (start_ > 0 && start_ >= buffer_.size() / 2) {
    buffer_.erase(0, start_);
    start_ = 0;
  }
  buffer_.append(bytes);
}

std::optional<std::string> LineBuffer::pop() {
  const auto nl = buffer_.find('\n', start_);
  if (nl == std::string::npos) {
    if (buffered() > max_line_) throw ProtocolError("line exceeds size limit");
    return std::nullopt;
  }
  std::size_t end = nl;
  if (end > start_ && buffer_[end - 1] == '\r') --end;
  std::string line = buffer_.substr(start_, end - start_);
  start_ = nl + 1;
  return line;
}

}  // namespace plastiq
