#include <deque>

#include "doctest.h"

#include "collage/errors.hpp"
#include "collage/prompt_store.hpp"
#include "collage/providers.hpp"
#include "collage/providers_http.hpp"
#include "collage/providers_mock.hpp"
#include "test_support.hpp"

using namespace collage;
using namespace collage::providers;
using collage::testing::TempDir;

namespace {

RetryPolicy fast_retry(std::vector<std::chrono::milliseconds>* slept = nullptr) {
  RetryPolicy policy;
  policy.attempts = 3;
  policy.jitter = false;
  policy.jitter_seed = 1;
  policy.sleeper = [slept](std::chrono::milliseconds d) {
    if (slept != nullptr) slept->push_back(d);
  };
  return policy;
}

// Scripted HTTP endpoint: pops one canned response per call, records bodies.
class ScriptedTransport : public HttpTransport {
 public:
  explicit ScriptedTransport(std::deque<HttpResponse> responses)
      : responses_(std::move(responses)) {}

  HttpResponse post_json(const std::string& url, const std::map<std::string, std::string>& headers,
                         const std::string& body) override {
    urls.push_back(url);
    header_log.push_back(headers);
    bodies.push_back(body);
    if (responses_.empty()) throw TransportError("scripted transport: script exhausted");
    HttpResponse next = responses_.front();
    responses_.pop_front();
    return next;
  }

  std::vector<std::string> urls;
  std::vector<std::map<std::string, std::string>> header_log;
  std::vector<std::string> bodies;

 private:
  std::deque<HttpResponse> responses_;
};

EndpointConfig chat_endpoint() {
  EndpointConfig cfg;
  cfg.url = "https://chat.example/v1/complete";
  cfg.model = "judge-1";
  cfg.api_key = "sk-test";
  return cfg;
}

std::string chat_body(const std::string& content) {
  model::json j{{"choices", model::json::array({model::json{
                                {"message", model::json{{"content", content}}}}})}};
  return j.dump();
}

ChatRequest simple_chat_request() {
  ChatRequest request;
  request.system_prompt = "system";
  request.user_parts.push_back(ChatPart::make_text("hello"));
  request.temperature = 0.3;
  return request;
}

ImageGenRequest simple_image_request() {
  ImageGenRequest request;
  request.prompt_blocks = {"FIDELITY: keep it exact", "PANEL r1c1: a calm wide shot",
                           "PANEL r1c2: a close detail"};
  request.target_width = 64;
  request.target_height = 32;
  request.layout = model::GridLayout::standard(1, 2);
  return request;
}

}  // namespace

TEST_CASE("retry_call retries transport and rate limit errors only") {
  int calls = 0;
  std::string out = retry_call(fast_retry(), [&]() -> std::string {
    ++calls;
    if (calls < 3) throw TransportError("flaky");
    return "ok";
  });
  CHECK(out == "ok");
  CHECK(calls == 3);

  calls = 0;
  CHECK_THROWS_AS(retry_call(fast_retry(),
                             [&]() -> std::string {
                               ++calls;
                               throw RateLimited("slow down");
                             }),
                  RateLimited);
  CHECK(calls == 3);

  calls = 0;
  CHECK_THROWS_AS(retry_call(fast_retry(),
                             [&]() -> std::string {
                               ++calls;
                               throw AuthError("bad key");
                             }),
                  AuthError);
  CHECK(calls == 1);

  calls = 0;
  CHECK_THROWS_AS(retry_call(fast_retry(),
                             [&]() -> std::string {
                               ++calls;
                               throw ContentRefusal("no");
                             }),
                  ContentRefusal);
  CHECK(calls == 1);
}

TEST_CASE("retry_call sleeps between attempts with growing backoff") {
  std::vector<std::chrono::milliseconds> slept;
  RetryPolicy policy = fast_retry(&slept);
  int calls = 0;
  CHECK_THROWS_AS(retry_call(policy,
                             [&]() -> std::string {
                               ++calls;
                               throw TransportError("down");
                             }),
                  TransportError);
  CHECK(calls == 3);
  REQUIRE(slept.size() == 2);
  CHECK(slept[0].count() == 500);
  CHECK(slept[1].count() == 1000);
}

TEST_CASE("backoff_delay grows by the factor and jitter stays bounded") {
  RetryPolicy policy;
  policy.jitter = false;
  CHECK(backoff_delay(policy, 0, 0.5).count() == 500);
  CHECK(backoff_delay(policy, 1, 0.5).count() == 1000);
  CHECK(backoff_delay(policy, 2, 0.5).count() == 2000);

  policy.jitter = true;
  for (double unit : {0.0, 0.25, 0.999}) {
    auto d = backoff_delay(policy, 2, unit);
    CHECK(d.count() >= 0);
    CHECK(d.count() <= 2000);
  }
  CHECK(backoff_delay(policy, 2, 0.999).count() > backoff_delay(policy, 2, 0.001).count());
}

TEST_CASE("chat request preconditions") {
  ChatRequest empty;
  CHECK_THROWS_AS(check_chat_request(empty), PreconditionError);
  ChatRequest hot = simple_chat_request();
  hot.temperature = 2.5;
  CHECK_THROWS_AS(check_chat_request(hot), PreconditionError);
  CHECK_NOTHROW(check_chat_request(simple_chat_request()));
}

TEST_CASE("image request preconditions") {
  ImageGenRequest request = simple_image_request();
  CHECK_NOTHROW(check_image_request(request));

  ImageGenRequest no_blocks = request;
  no_blocks.prompt_blocks.clear();
  CHECK_THROWS_AS(check_image_request(no_blocks), PreconditionError);

  ImageGenRequest flat = request;
  flat.target_height = 0;
  CHECK_THROWS_AS(check_image_request(flat), PreconditionError);

  ImageGenRequest ragged = request;
  ragged.target_width = 63;
  CHECK_THROWS_AS(check_image_request(ragged), PreconditionError);
}

TEST_CASE("http chat provider speaks the wire shape and authenticates") {
  ScriptedTransport transport({{200, chat_body("the answer")}});
  HttpChatProvider provider(chat_endpoint(), transport, fast_retry());

  ChatRequest request = simple_chat_request();
  request.user_parts.push_back(ChatPart::make_image(Image::solid(4, 4, 9, 9, 9)));
  request.format = ResponseFormat::json_object;
  std::string out = provider.chat_complete(request);
  CHECK(out == "the answer");

  REQUIRE(transport.bodies.size() == 1);
  model::json body = model::json::parse(transport.bodies[0]);
  CHECK(body["model"] == "judge-1");
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][1]["role"] == "user");
  CHECK(body["messages"][1]["content"].size() == 2);
  CHECK(transport.header_log[0].at("Authorization") == "Bearer sk-test");
  CHECK(transport.urls[0] == chat_endpoint().url);
}

TEST_CASE("http chat provider retries 429 and 5xx but not 401") {
  ScriptedTransport transport({{429, "busy"}, {503, "down"}, {200, chat_body("late but fine")}});
  HttpChatProvider provider(chat_endpoint(), transport, fast_retry());
  CHECK(provider.chat_complete(simple_chat_request()) == "late but fine");
  CHECK(transport.bodies.size() == 3);

  ScriptedTransport exhausted({{429, "busy"}, {429, "busy"}, {429, "busy"}});
  HttpChatProvider tired(chat_endpoint(), exhausted, fast_retry());
  CHECK_THROWS_AS(tired.chat_complete(simple_chat_request()), RateLimited);
  CHECK(exhausted.bodies.size() == 3);

  ScriptedTransport denied({{401, "who are you"}});
  HttpChatProvider locked(chat_endpoint(), denied, fast_retry());
  CHECK_THROWS_AS(locked.chat_complete(simple_chat_request()), AuthError);
  CHECK(denied.bodies.size() == 1);
}

TEST_CASE("http chat provider rejects malformed response documents") {
  ScriptedTransport transport({{200, "{\"choices\": []}"}});
  HttpChatProvider provider(chat_endpoint(), transport, fast_retry());
  CHECK_THROWS_AS(provider.chat_complete(simple_chat_request()), TransportError);
}

TEST_CASE("http image provider round trips png bytes") {
  Image canvas = testing::make_panel_grid(1, 2, {{{200, 10, 10}}, {{10, 200, 10}}}, 16);
  std::string b64 = base64_encode(encode_png(canvas));
  model::json response{{"data", model::json::array({model::json{{"b64_json", b64}}})}};
  ScriptedTransport transport({{200, response.dump()}});
  HttpImageGenProvider provider(chat_endpoint(), transport, fast_retry());

  GenResult result = provider.generate_image(simple_image_request());
  CHECK(result.image.width == 32);
  CHECK(result.image.height == 16);
  CHECK(result.metadata.provider_width == 32);

  model::json body = model::json::parse(transport.bodies[0]);
  CHECK(body["width"] == 64);
  CHECK(body["height"] == 32);
  CHECK(body["prompt"].get<std::string>().find("PANEL r1c1") != std::string::npos);
}

TEST_CASE("http image provider maps refusal bodies to ContentRefusal") {
  model::json refusal{{"error", model::json{{"code", "content_policy_violation"},
                                            {"message", "refused"}}}};
  ScriptedTransport transport({{400, refusal.dump()}});
  HttpImageGenProvider provider(chat_endpoint(), transport, fast_retry());
  CHECK_THROWS_AS(provider.generate_image(simple_image_request()), ContentRefusal);
  CHECK(transport.bodies.size() == 1);
}

TEST_CASE("http embed provider enforces the declared dimension") {
  model::json good{{"data", model::json::array({model::json{
                                {"embedding", model::json::array({1.0, 2.0, 3.0})}}})}};
  ScriptedTransport transport({{200, good.dump()}});
  HttpEmbedProvider provider(chat_endpoint(), 3, transport, fast_retry());
  EmbeddingVector v = provider.embed_image(Image::solid(4, 4, 1, 2, 3));
  CHECK(v.values == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(v.source_digest == image_digest(Image::solid(4, 4, 1, 2, 3)));

  ScriptedTransport short_transport({{200, good.dump()}});
  HttpEmbedProvider wrong(chat_endpoint(), 8, short_transport, fast_retry());
  CHECK_THROWS_AS(wrong.embed_image(Image::solid(4, 4, 1, 2, 3)), DimensionMismatch);
}

TEST_CASE("base64 round trips all tail lengths") {
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 255u}) {
    std::vector<std::uint8_t> bytes;
    for (std::size_t i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(i * 7 + 1));
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
  CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a', 'n'}) == "TWFu");
  CHECK_THROWS_AS(base64_decode("@@@@"), DecodeError);
}

TEST_CASE("conforming image provider resizes wrong canvases and flags it") {
  MockImageProvider wrong_size(std::make_pair(20, 10));
  ConformingImageProvider conforming(wrong_size);
  GenResult result = conforming.generate_image(simple_image_request());
  CHECK(result.image.width == 64);
  CHECK(result.image.height == 32);
  CHECK(result.metadata.resized);
  CHECK(result.metadata.provider_width == 20);

  MockImageProvider right_size;
  ConformingImageProvider pass_through(right_size);
  GenResult exact = pass_through.generate_image(simple_image_request());
  CHECK_FALSE(exact.metadata.resized);
  CHECK(exact.image.width == 64);
}

TEST_CASE("caching embed provider memoizes by image digest") {
  MockEmbedProvider inner;
  CachingEmbedProvider caching(inner);
  Image a = Image::solid(8, 8, 10, 20, 30);
  Image a_again = Image::solid(8, 8, 10, 20, 30);
  Image b = Image::solid(8, 8, 200, 20, 30);

  EmbeddingVector va = caching.embed_image(a);
  EmbeddingVector va2 = caching.embed_image(a_again);
  CHECK(caching.inner_calls() == 1);
  CHECK(va.values == va2.values);
  caching.embed_image(b);
  CHECK(caching.inner_calls() == 2);
  CHECK(caching.dimension() == inner.dimension());
}

TEST_CASE("counting spies record digests and tally calls") {
  MockChatProvider mock(testing::fixtures_dir());
  CountingChatProvider spy(mock);

  ChatRequest request;
  request.user_parts.push_back(
      ChatPart::make_text(std::string(kMarkerGate1) + "\nscore this"));
  spy.chat_complete(request);
  spy.chat_complete(request);
  CHECK(spy.calls() == 2);
  auto records = spy.drain_records();
  REQUIRE(records.size() == 2);
  CHECK(records[0].kind == "chat");
  CHECK(records[0].request_digest == records[1].request_digest);
  CHECK(records[0].response_digest == records[1].response_digest);
  CHECK(spy.drain_records().empty());

  MockImageProvider mock_image;
  CountingImageProvider image_spy(mock_image);
  image_spy.generate_image(simple_image_request());
  CHECK(image_spy.calls() == 1);
  auto image_records = image_spy.drain_records();
  REQUIRE(image_records.size() == 1);
  CHECK(image_records[0].kind == "image");
}

TEST_CASE("request digests track content") {
  ChatRequest a = simple_chat_request();
  ChatRequest b = simple_chat_request();
  CHECK(chat_request_digest(a) == chat_request_digest(b));
  b.temperature = 0.9;
  CHECK(chat_request_digest(a) != chat_request_digest(b));
  b = simple_chat_request();
  b.user_parts.push_back(ChatPart::make_image(Image::solid(2, 2, 1, 1, 1)));
  CHECK(chat_request_digest(a) != chat_request_digest(b));

  ImageGenRequest x = simple_image_request();
  ImageGenRequest y = simple_image_request();
  CHECK(image_request_digest(x) == image_request_digest(y));
  y.prompt_blocks[0] += " and more";
  CHECK(image_request_digest(x) != image_request_digest(y));
}

TEST_CASE("mock chat dispatch picks the earliest marker and demands one") {
  MockChatProvider mock(testing::fixtures_dir());

  ChatRequest unmarked;
  unmarked.user_parts.push_back(ChatPart::make_text("no task here"));
  CHECK_THROWS_AS(mock.chat_complete(unmarked), PreconditionError);

  ChatRequest two_markers;
  two_markers.user_parts.push_back(ChatPart::make_text(
      std::string(kMarkerGate2) + "\nquoted later: " + kMarkerGate1));
  std::string gate2 = mock.chat_complete(two_markers);
  model::json j = model::parse_json_text(gate2);
  CHECK(j.contains("realism"));
  CHECK_FALSE(j.contains("identity"));
}

TEST_CASE("mock chat responses are pure functions of the request") {
  MockChatProvider mock(testing::fixtures_dir());
  PromptStore prompts(testing::prompts_dir());
  std::string text = prompts.render(
      "gate1", {{"product_name", "Velvet Hand Cream"}, {"framework_json", "FRAMEWORK:\n{}"}});
  ChatRequest request;
  request.user_parts.push_back(ChatPart::make_text(text));
  std::string first = mock.chat_complete(request);
  std::string second = mock.chat_complete(request);
  CHECK(first == second);
  CHECK_FALSE(first.empty());
}

TEST_CASE("mock image provider paints panels from their prompt blocks") {
  MockImageProvider mock;
  ImageGenRequest request;
  request.layout = model::GridLayout::standard(2, 2);
  request.target_width = 32;
  request.target_height = 32;
  request.prompt_blocks = {"STYLE: shared look"};
  for (const auto& label : request.layout.panel_order) {
    request.prompt_blocks.push_back("PANEL " + label + ": a scene for " + label);
  }
  GenResult result = mock.generate_image(request);

  std::uint8_t expected[3];
  MockImageProvider::panel_color("PANEL top_left: a scene for top_left", expected);
  CHECK(result.image.row(0)[0] == expected[0]);
  CHECK(result.image.row(0)[1] == expected[1]);
  CHECK(result.image.row(0)[2] == expected[2]);

  MockImageProvider::panel_color("PANEL bottom_right: a scene for bottom_right", expected);
  const std::uint8_t* last_row = result.image.row(31);
  CHECK(last_row[31 * 3] == expected[0]);

  ImageGenRequest missing = request;
  missing.prompt_blocks.pop_back();
  CHECK_THROWS_AS(mock.generate_image(missing), PreconditionError);
}

TEST_CASE("mock embeddings are deterministic, finite, and sized") {
  MockEmbedProvider mock;
  CHECK(mock.dimension() == 8);
  Image img = testing::checker_packshot(16);
  EmbeddingVector a = mock.embed_image(img);
  EmbeddingVector b = mock.embed_image(img);
  CHECK(a.values == b.values);
  CHECK(a.values.size() == 8);
  double norm = 0;
  for (double v : a.values) norm += v * v;
  CHECK(norm > 0.0);
  EmbeddingVector other = mock.embed_image(Image::solid(16, 16, 250, 1, 1));
  CHECK(other.values != a.values);
}

TEST_CASE("every prompt template opens with its dispatch marker") {
  PromptStore prompts(testing::prompts_dir());
  const std::pair<const char*, const char*> pairs[] = {
      {"stage1", kMarkerStage1},
      {"stage2", kMarkerStage2},
      {"stage3", kMarkerStage3},
      {"repair", kMarkerRepair},
      {"reference_abstract", kMarkerRefAbstract},
      {"reference_extract", kMarkerRefExtract},
      {"gate1", kMarkerGate1},
      {"gate2", kMarkerGate2},
      {"suggest", kMarkerSuggest},
      {"visual_quality", kMarkerVisualQuality},
      {"reference_transfer", kMarkerRefTransfer},
  };
  for (const auto& [name, marker] : pairs) {
    CHECK_MESSAGE(util::starts_with(prompts.raw(name), std::string(marker) + "\n"),
                  name << " must open with " << marker);
  }
}

TEST_CASE("labeled block and line parsing") {
  std::string text =
      "HEAD\nLAYOUT: 2x3\nPLAN:\n```json\n{\"a\": 1}\n```\nPOSITIONS: one, two\n";
  auto block = find_labeled_block(text, "PLAN");
  REQUIRE(block.has_value());
  CHECK(*block == "{\"a\": 1}");
  CHECK_FALSE(find_labeled_block(text, "ABSENT").has_value());

  auto layout = find_line_value(text, "LAYOUT");
  REQUIRE(layout.has_value());
  CHECK(*layout == "2x3");
  auto positions = find_line_value(text, "POSITIONS");
  REQUIRE(positions.has_value());
  CHECK(*positions == "one, two");
  CHECK_FALSE(find_line_value(text, "NOPE").has_value());
}
