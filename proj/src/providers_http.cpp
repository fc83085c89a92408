#include "collage/providers_http.hpp"

#include "collage/errors.hpp"
#include "collage/util.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

namespace collage::providers {

namespace {

using model::json;

constexpr const char* kBase64Chars =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

// Splits "https://host:port/path" into client target and path.
struct UrlParts {
  std::string scheme_host_port;
  std::string path;
};

UrlParts split_url(const std::string& url) {
  std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw PreconditionError("endpoint url missing scheme: " + url);
  }
  std::size_t path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string data_uri_png(const Image& image) {
  return "data:image/png;base64," + base64_encode(encode_png(image));
}

json parse_response_body(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("response body is not valid JSON");
  return j;
}

// Looks for a base64 image in the shapes commonly returned by image APIs.
std::string find_image_b64(const json& j) {
  if (j.contains("data") && j["data"].is_array() && !j["data"].empty()) {
    const json& first = j["data"][0];
    if (first.contains("b64_json") && first["b64_json"].is_string()) {
      return first["b64_json"].get<std::string>();
    }
  }
  if (j.contains("image_b64") && j["image_b64"].is_string()) {
    return j["image_b64"].get<std::string>();
  }
  throw TransportError("image response carries no base64 payload");
}

std::vector<double> find_embedding(const json& j) {
  const json* values = nullptr;
  if (j.contains("data") && j["data"].is_array() && !j["data"].empty() &&
      j["data"][0].contains("embedding")) {
    values = &j["data"][0]["embedding"];
  } else if (j.contains("embedding")) {
    values = &j["embedding"];
  }
  if (values == nullptr || !values->is_array()) {
    throw TransportError("embed response carries no embedding array");
  }
  std::vector<double> out;
  out.reserve(values->size());
  for (const auto& v : *values) {
    if (!v.is_number()) throw TransportError("embedding array holds a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

bool looks_like_refusal(const json& j) {
  if (j.contains("refusal") && j["refusal"].is_string()) return true;
  if (j.contains("error") && j["error"].is_object()) {
    const json& err = j["error"];
    if (err.contains("code") && err["code"].is_string()) {
      std::string code = util::to_lower(err["code"].get<std::string>());
      return code.find("content") != std::string::npos ||
             code.find("safety") != std::string::npos ||
             code.find("moderation") != std::string::npos;
    }
  }
  return false;
}

}  // namespace

std::string base64_encode(const std::uint8_t* data, std::size_t size) {
  std::string out;
  out.reserve((size + 2) / 3 * 4);
  for (std::size_t i = 0; i < size; i += 3) {
    std::uint32_t chunk = static_cast<std::uint32_t>(data[i]) << 16;
    if (i + 1 < size) chunk |= static_cast<std::uint32_t>(data[i + 1]) << 8;
    if (i + 2 < size) chunk |= static_cast<std::uint32_t>(data[i + 2]);
    out.push_back(kBase64Chars[(chunk >> 18) & 0x3f]);
    out.push_back(kBase64Chars[(chunk >> 12) & 0x3f]);
    out.push_back(i + 1 < size ? kBase64Chars[(chunk >> 6) & 0x3f] : '=');
    out.push_back(i + 2 < size ? kBase64Chars[chunk & 0x3f] : '=');
  }
  return out;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  return base64_encode(bytes.data(), bytes.size());
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  std::uint32_t buffer = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    int v = value_of(c);
    if (v < 0) throw DecodeError("invalid base64 character");
    buffer = (buffer << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((buffer >> bits) & 0xff));
    }
  }
  return out;
}

HttpResponse TlsTransport::post_json(const std::string& url,
                                     const std::map<std::string, std::string>& headers,
                                     const std::string& body) {
  UrlParts parts = split_url(url);
  httplib::Client client(parts.scheme_host_port);
  client.set_connection_timeout(timeout_seconds_, 0);
  client.set_read_timeout(timeout_seconds_, 0);
  client.set_write_timeout(timeout_seconds_, 0);
  httplib::Headers hdrs;
  for (const auto& [k, v] : headers) hdrs.emplace(k, v);
  auto result = client.Post(parts.path, hdrs, body, "application/json");
  if (!result) {
    throw TransportError("http post failed: " + httplib::to_string(result.error()));
  }
  return {result->status, result->body};
}

void raise_for_status(int status, const std::string& body) {
  if (status >= 200 && status < 300) return;
  std::string summary = "http " + std::to_string(status) + ": " +
                        (body.size() > 300 ? body.substr(0, 300) + "..." : body);
  if (status == 401 || status == 403) throw AuthError(summary);
  if (status == 429) throw RateLimited(summary);
  throw TransportError(summary);
}

// ---------------------------------------------------------------------------
// Chat

HttpChatProvider::HttpChatProvider(EndpointConfig config, HttpTransport& transport,
                                   RetryPolicy retry)
    : config_(std::move(config)), transport_(transport), retry_(std::move(retry)) {}

std::string HttpChatProvider::chat_complete(const ChatRequest& request) {
  check_chat_request(request);
  json content = json::array();
  for (const auto& part : request.user_parts) {
    if (part.kind == ChatPart::Kind::text) {
      content.push_back({{"type", "text"}, {"text", part.text}});
    } else {
      content.push_back(
          {{"type", "image_url"}, {"image_url", {{"url", data_uri_png(part.image)}}}});
    }
  }
  json messages = json::array();
  if (!request.system_prompt.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  }
  messages.push_back({{"role", "user"}, {"content", content}});
  json payload{{"model", config_.model},
               {"messages", messages},
               {"temperature", request.temperature}};
  if (request.format == ResponseFormat::json_object) {
    payload["response_format"] = {{"type", "json_object"}};
  }
  std::string body = payload.dump();
  std::map<std::string, std::string> headers{{"Authorization", "Bearer " + config_.api_key}};
  return retry_call(retry_, [&]() {
    HttpResponse response = transport_.post_json(config_.url, headers, body);
    raise_for_status(response.status, response.body);
    json j = parse_response_body(response.body);
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
      throw TransportError("chat response has no choices");
    }
    const json& message = j["choices"][0]["message"];
    if (!message.contains("content") || !message["content"].is_string()) {
      throw TransportError("chat response has no text content");
    }
    return message["content"].get<std::string>();
  });
}

// ---------------------------------------------------------------------------
// Image generation

HttpImageGenProvider::HttpImageGenProvider(EndpointConfig config, HttpTransport& transport,
                                           RetryPolicy retry)
    : config_(std::move(config)), transport_(transport), retry_(std::move(retry)) {}

GenResult HttpImageGenProvider::generate_image(const ImageGenRequest& request) {
  check_image_request(request);
  json condition = json::array();
  for (const auto& image : request.condition_images) {
    condition.push_back(base64_encode(encode_png(image)));
  }
  json payload{{"model", config_.model},
               {"prompt", request.joined_prompt()},
               {"width", request.target_width},
               {"height", request.target_height},
               {"condition_images", condition}};
  std::string body = payload.dump();
  std::map<std::string, std::string> headers{{"Authorization", "Bearer " + config_.api_key}};
  std::string b64 = retry_call(retry_, [&]() {
    HttpResponse response = transport_.post_json(config_.url, headers, body);
    if (response.status == 400 || response.status == 422) {
      json j = json::parse(response.body, nullptr, false);
      if (!j.is_discarded() && looks_like_refusal(j)) {
        throw ContentRefusal("image provider refused the prompt");
      }
    }
    raise_for_status(response.status, response.body);
    return find_image_b64(parse_response_body(response.body));
  });
  GenResult result;
  result.image = decode_image(base64_decode(b64));
  result.metadata.provider_width = result.image.width;
  result.metadata.provider_height = result.image.height;
  return result;
}

// ---------------------------------------------------------------------------
// Embeddings

HttpEmbedProvider::HttpEmbedProvider(EndpointConfig config, int dimension,
                                     HttpTransport& transport, RetryPolicy retry)
    : config_(std::move(config)),
      dimension_(dimension),
      transport_(transport),
      retry_(std::move(retry)) {}

EmbeddingVector HttpEmbedProvider::embed_image(const Image& image) {
  if (image.empty()) throw PreconditionError("cannot embed an empty image");
  json payload{{"model", config_.model}, {"image_b64", base64_encode(encode_png(image))}};
  std::string body = payload.dump();
  std::map<std::string, std::string> headers{{"Authorization", "Bearer " + config_.api_key}};
  std::string raw = retry_call(retry_, [&]() {
    HttpResponse response = transport_.post_json(config_.url, headers, body);
    raise_for_status(response.status, response.body);
    return response.body;
  });
  EmbeddingVector out;
  out.values = find_embedding(parse_response_body(raw));
  if (static_cast<int>(out.values.size()) != dimension_) {
    throw DimensionMismatch("embed endpoint returned " + std::to_string(out.values.size()) +
                            " values, config declares " + std::to_string(dimension_));
  }
  out.source_digest = image_digest(image);
  return out;
}

}  // namespace collage::providers
