#include "collage/providers.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage::providers {

std::string ChatRequest::joined_text() const {
  std::vector<std::string> texts;
  for (const auto& part : user_parts) {
    if (part.kind == ChatPart::Kind::text) texts.push_back(part.text);
  }
  return util::join(texts, "\n\n");
}

int ChatRequest::image_count() const {
  int n = 0;
  for (const auto& part : user_parts) {
    if (part.kind == ChatPart::Kind::image) ++n;
  }
  return n;
}

void check_chat_request(const ChatRequest& request) {
  if (request.user_parts.empty()) {
    throw PreconditionError("chat request has no user parts");
  }
  for (const auto& part : request.user_parts) {
    if (part.kind == ChatPart::Kind::image && part.image.empty()) {
      throw PreconditionError("chat request contains an empty image part");
    }
  }
  if (request.temperature < 0.0 || request.temperature > 2.0) {
    throw PreconditionError("chat temperature outside [0, 2]");
  }
}

std::string ImageGenRequest::joined_prompt() const { return util::join(prompt_blocks, "\n\n"); }

void check_image_request(const ImageGenRequest& request) {
  if (request.prompt_blocks.empty()) {
    throw PreconditionError("image request has no prompt blocks");
  }
  if (request.target_width <= 0 || request.target_height <= 0) {
    throw PreconditionError("image request needs a positive canvas");
  }
  if (!model::validate(request.layout).ok()) {
    throw PreconditionError("image request layout is invalid");
  }
  if (request.target_width % request.layout.cols != 0 ||
      request.target_height % request.layout.rows != 0) {
    throw PreconditionError("canvas dimensions must be divisible by the grid");
  }
  for (const auto& image : request.condition_images) {
    if (image.empty()) throw PreconditionError("image request contains an empty condition image");
  }
}

// ---------------------------------------------------------------------------
// Retry

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt_index,
                                        double unit_random) {
  double ceiling = static_cast<double>(policy.base_delay.count()) *
                   std::pow(policy.factor, static_cast<double>(attempt_index));
  double chosen = policy.jitter ? ceiling * unit_random : ceiling;
  return std::chrono::milliseconds(static_cast<long long>(chosen));
}

std::string retry_call(const RetryPolicy& policy, const std::function<std::string()>& call) {
  if (policy.attempts < 1) throw PreconditionError("retry policy needs at least one attempt");
  std::mt19937_64 rng(policy.jitter_seed != 0 ? policy.jitter_seed : std::random_device{}());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto sleep_for = [&](std::chrono::milliseconds d) {
    if (policy.sleeper) {
      policy.sleeper(d);
    } else {
      std::this_thread::sleep_for(d);
    }
  };
  for (int attempt = 0;; ++attempt) {
    try {
      return call();
    } catch (const RateLimited&) {
      if (attempt + 1 >= policy.attempts) throw;
    } catch (const TransportError&) {
      if (attempt + 1 >= policy.attempts) throw;
    }
    sleep_for(backoff_delay(policy, attempt, unit(rng)));
  }
}

// ---------------------------------------------------------------------------
// Digests

std::string chat_request_digest(const ChatRequest& request) {
  std::string buf = "chat|" + request.system_prompt + "|" +
                    model::json(request.temperature).dump() + "|" +
                    (request.format == ResponseFormat::json_object ? "json" : "text");
  for (const auto& part : request.user_parts) {
    if (part.kind == ChatPart::Kind::text) {
      buf += "|t:" + part.text;
    } else {
      buf += "|i:" + image_digest(part.image);
    }
  }
  return util::sha256_hex(buf);
}

std::string image_request_digest(const ImageGenRequest& request) {
  std::string buf = "image|" + std::to_string(request.target_width) + "x" +
                    std::to_string(request.target_height) + "|" +
                    std::to_string(request.layout.rows) + "x" +
                    std::to_string(request.layout.cols);
  for (const auto& block : request.prompt_blocks) buf += "|b:" + block;
  for (const auto& image : request.condition_images) buf += "|i:" + image_digest(image);
  return util::sha256_hex(buf);
}

// ---------------------------------------------------------------------------
// Decorators

GenResult ConformingImageProvider::generate_image(const ImageGenRequest& request) {
  check_image_request(request);
  GenResult result = inner_.generate_image(request);
  if (result.image.empty()) throw DecodeError("image provider returned an empty image");
  result.metadata.provider_width = result.image.width;
  result.metadata.provider_height = result.image.height;
  if (result.image.width != request.target_width ||
      result.image.height != request.target_height) {
    result.image = resize(result.image, request.target_width, request.target_height);
    result.metadata.resized = true;
  }
  return result;
}

EmbeddingVector CachingEmbedProvider::embed_image(const Image& image) {
  std::string digest = image_digest(image);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(digest);
    if (it != cache_.end()) return it->second;
  }
  EmbeddingVector v = inner_.embed_image(image);
  if (static_cast<int>(v.values.size()) != inner_.dimension()) {
    throw DimensionMismatch("embedding has " + std::to_string(v.values.size()) +
                            " values, provider declares " + std::to_string(inner_.dimension()));
  }
  for (double value : v.values) {
    if (!std::isfinite(value)) throw DimensionMismatch("embedding contains a non-finite value");
  }
  v.source_digest = digest;
  std::lock_guard<std::mutex> lock(mutex_);
  ++inner_calls_;
  cache_.emplace(digest, v);
  return v;
}

std::string CountingChatProvider::chat_complete(const ChatRequest& request) {
  std::string request_digest = chat_request_digest(request);
  std::string response = inner_.chat_complete(request);
  std::lock_guard<std::mutex> lock(mutex_);
  ++calls_;
  records_.push_back({"chat", request_digest, util::sha256_hex(response)});
  return response;
}

std::vector<CallRecord> CountingChatProvider::drain_records() {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<CallRecord> out;
  out.swap(records_);
  return out;
}

GenResult CountingImageProvider::generate_image(const ImageGenRequest& request) {
  std::string request_digest = image_request_digest(request);
  GenResult result = inner_.generate_image(request);
  std::lock_guard<std::mutex> lock(mutex_);
  ++calls_;
  records_.push_back({"image", request_digest, image_digest(result.image)});
  return result;
}

std::vector<CallRecord> CountingImageProvider::drain_records() {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<CallRecord> out;
  out.swap(records_);
  return out;
}

}  // namespace collage::providers
