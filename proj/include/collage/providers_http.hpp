#pragma once

#include <map>
#include <memory>
#include <string>

#include "collage/providers.hpp"

namespace collage::providers {

// Minimal HTTP surface the live providers need. Tests substitute a scripted
// transport; production uses TlsTransport below.
struct HttpResponse {
  int status = 0;
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post_json(const std::string& url,
                                 const std::map<std::string, std::string>& headers,
                                 const std::string& body) = 0;
};

// cpp-httplib backed transport with TLS. Connection errors surface as
// TransportError so the retry policy sees them.
class TlsTransport : public HttpTransport {
 public:
  explicit TlsTransport(int timeout_seconds = 120) : timeout_seconds_(timeout_seconds) {}
  HttpResponse post_json(const std::string& url,
                         const std::map<std::string, std::string>& headers,
                         const std::string& body) override;

 private:
  int timeout_seconds_;
};

struct EndpointConfig {
  std::string url;     // full URL of the POST endpoint
  std::string model;   // provider-side model name
  std::string api_key; // bearer token; read from the environment, never from files
};

// Maps an HTTP status to the right exception and throws. 2xx returns.
void raise_for_status(int status, const std::string& body);

// Chat completions over the familiar JSON wire shape: system + one user
// message whose content is a list of text and base64 image parts.
class HttpChatProvider : public ChatProvider {
 public:
  HttpChatProvider(EndpointConfig config, HttpTransport& transport, RetryPolicy retry);
  std::string chat_complete(const ChatRequest& request) override;

 private:
  EndpointConfig config_;
  HttpTransport& transport_;
  RetryPolicy retry_;
};

// Image generation: prompt plus base64 condition images in, base64 image out.
class HttpImageGenProvider : public ImageGenProvider {
 public:
  HttpImageGenProvider(EndpointConfig config, HttpTransport& transport, RetryPolicy retry);
  GenResult generate_image(const ImageGenRequest& request) override;

 private:
  EndpointConfig config_;
  HttpTransport& transport_;
  RetryPolicy retry_;
};

class HttpEmbedProvider : public EmbedProvider {
 public:
  HttpEmbedProvider(EndpointConfig config, int dimension, HttpTransport& transport,
                    RetryPolicy retry);
  EmbeddingVector embed_image(const Image& image) override;
  int dimension() const override { return dimension_; }

 private:
  EndpointConfig config_;
  int dimension_;
  HttpTransport& transport_;
  RetryPolicy retry_;
};

std::string base64_encode(const std::uint8_t* data, std::size_t size);
std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace collage::providers
