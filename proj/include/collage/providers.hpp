#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "collage/image.hpp"
#include "collage/plan_model.hpp"

namespace collage::providers {

// ---------------------------------------------------------------------------
// Requests and results

struct ChatPart {
  enum class Kind { text, image };
  Kind kind = Kind::text;
  std::string text;
  Image image;

  static ChatPart make_text(std::string t) {
    ChatPart p;
    p.kind = Kind::text;
    p.text = std::move(t);
    return p;
  }
  static ChatPart make_image(Image img) {
    ChatPart p;
    p.kind = Kind::image;
    p.image = std::move(img);
    return p;
  }
};

enum class ResponseFormat { free_text, json_object };

struct ChatRequest {
  std::string system_prompt;
  std::vector<ChatPart> user_parts;
  ResponseFormat format = ResponseFormat::free_text;
  double temperature = 0.7;

  // All text parts in order, double-newline separated.
  std::string joined_text() const;
  int image_count() const;
};

// Throws PreconditionError: a chat request needs at least one user part and a
// temperature in [0, 2].
void check_chat_request(const ChatRequest& request);

struct ImageGenRequest {
  // Ordered prompt blocks; the provider sees them joined in this order.
  std::vector<std::string> prompt_blocks;
  std::vector<Image> condition_images;
  int target_width = 0;
  int target_height = 0;
  model::GridLayout layout;

  std::string joined_prompt() const;
};

// Throws PreconditionError: positive canvas, at least one block, a valid
// layout, and a canvas divisible by the grid.
void check_image_request(const ImageGenRequest& request);

struct GenMetadata {
  bool resized = false;
  int provider_width = 0;
  int provider_height = 0;
};

struct GenResult {
  Image image;
  GenMetadata metadata;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::string source_digest;  // digest of the embedded image
};

// ---------------------------------------------------------------------------
// Interfaces

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string chat_complete(const ChatRequest& request) = 0;
};

class ImageGenProvider {
 public:
  virtual ~ImageGenProvider() = default;
  virtual GenResult generate_image(const ImageGenRequest& request) = 0;
};

class EmbedProvider {
 public:
  virtual ~EmbedProvider() = default;
  virtual EmbeddingVector embed_image(const Image& image) = 0;
  virtual int dimension() const = 0;
};

// ---------------------------------------------------------------------------
// Retry. Exponential backoff with full jitter; the sleeper and the jitter
// source are injectable so tests run instantly and deterministically.

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds base_delay{500};
  double factor = 2.0;
  bool jitter = true;
  std::function<void(std::chrono::milliseconds)> sleeper;  // default: real sleep
  std::uint64_t jitter_seed = 0;  // 0 means nondeterministic
};

// Runs `call`, retrying on TransportError and RateLimited up to
// policy.attempts total attempts. AuthError and ContentRefusal pass through
// untouched. The last error is rethrown once the budget is spent.
std::string retry_call(const RetryPolicy& policy, const std::function<std::string()>& call);

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt_index,
                                        double unit_random);

// ---------------------------------------------------------------------------
// Decorators

// Enforces the image contract around any inner provider: checks the request,
// and when the provider returns a canvas of the wrong size, resizes it to the
// requested dimensions and flags that in the metadata.
class ConformingImageProvider : public ImageGenProvider {
 public:
  explicit ConformingImageProvider(ImageGenProvider& inner) : inner_(inner) {}
  GenResult generate_image(const ImageGenRequest& request) override;

 private:
  ImageGenProvider& inner_;
};

// Memoizes embeddings by image digest. Also enforces the declared dimension
// and finiteness of whatever the inner provider returns.
class CachingEmbedProvider : public EmbedProvider {
 public:
  explicit CachingEmbedProvider(EmbedProvider& inner) : inner_(inner) {}
  EmbeddingVector embed_image(const Image& image) override;
  int dimension() const override { return inner_.dimension(); }
  int inner_calls() const { return inner_calls_; }

 private:
  EmbedProvider& inner_;
  std::map<std::string, EmbeddingVector> cache_;
  std::mutex mutex_;
  int inner_calls_ = 0;
};

// Call-count spies. Each records request/response digests so a trace can
// reference model calls without storing payloads.

struct CallRecord {
  std::string kind;  // "chat" | "image" | "embed"
  std::string request_digest;
  std::string response_digest;
};

class CountingChatProvider : public ChatProvider {
 public:
  explicit CountingChatProvider(ChatProvider& inner) : inner_(inner) {}
  std::string chat_complete(const ChatRequest& request) override;
  int calls() const { return calls_; }
  std::vector<CallRecord> drain_records();

 private:
  ChatProvider& inner_;
  int calls_ = 0;
  std::vector<CallRecord> records_;
  std::mutex mutex_;
};

class CountingImageProvider : public ImageGenProvider {
 public:
  explicit CountingImageProvider(ImageGenProvider& inner) : inner_(inner) {}
  GenResult generate_image(const ImageGenRequest& request) override;
  int calls() const { return calls_; }
  std::vector<CallRecord> drain_records();

 private:
  ImageGenProvider& inner_;
  int calls_ = 0;
  std::vector<CallRecord> records_;
  std::mutex mutex_;
};

// Stable digest of a chat request's content (prompts, image digests,
// temperature, format). Two requests with equal content digest equally.
std::string chat_request_digest(const ChatRequest& request);
std::string image_request_digest(const ImageGenRequest& request);

}  // namespace collage::providers
