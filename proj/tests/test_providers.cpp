#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "magrag/providers.hpp"
#include "support.hpp"

using namespace magrag;

namespace {

ChatRequest request(std::string user, std::string agent = "") {
  ChatRequest r;
  r.system_prompt = "system";
  r.user_content = std::move(user);
  r.agent = std::move(agent);
  return r;
}

}  // namespace

TEST(ScriptedChat, WildcardPassThrough) {
  ScriptedChatProvider chat(ScriptedChatProvider::Script{{"*", "OK"}});
  EXPECT_EQ(chat.chat(request("anything at all")), "OK");
  EXPECT_EQ(chat.chat(request("something else")), "OK");
}

TEST(ScriptedChat, EmptyUserContentIsPreconditionViolation) {
  ScriptedChatProvider chat(ScriptedChatProvider::Script{{"*", "OK"}});
  try {
    chat.chat(request("   "));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::precondition);
  }
  EXPECT_EQ(chat.attempt_count(), 0u);
}

TEST(ScriptedChat, TemperatureOutOfRangeRejected) {
  ScriptedChatProvider chat(ScriptedChatProvider::Script{{"*", "OK"}});
  auto r = request("q");
  r.temperature = 1.5;
  EXPECT_THROW(chat.chat(r), Error);
}

TEST(ScriptedChat, RetriesTransportFailuresUpToLimit) {
  ScriptedChatProvider chat(ScriptedChatProvider::Script{{"*", "OK"}}, /*max_retries=*/2);
  chat.fail_next(2);
  EXPECT_EQ(chat.chat(request("q")), "OK");
  auto calls = chat.calls();
  ASSERT_EQ(calls.size(), 3u);
  EXPECT_TRUE(calls[0].failed);
  EXPECT_TRUE(calls[1].failed);
  EXPECT_FALSE(calls[2].failed);
}

TEST(ScriptedChat, GivesUpAfterOnePlusMaxRetriesAttempts) {
  ScriptedChatProvider chat(ScriptedChatProvider::Script{{"*", "OK"}}, /*max_retries=*/2);
  chat.fail_next(5);
  try {
    chat.chat(request("q"));
    FAIL() << "expected transport error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::transport);
  }
  EXPECT_EQ(chat.attempt_count(), 3u);
}

TEST(ScriptedChat, EmptyCompletionIsAnError) {
  ScriptedChatProvider chat(ScriptedChatProvider::Script{{"*", "  \n"}});
  try {
    chat.chat(request("q"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_completion);
  }
}

TEST(ScriptedChat, LookupOrderExactThenAgentThenWildcard) {
  ScriptedChatProvider chat(ScriptedChatProvider::Script{{"exact question", "exact"}, {"agent:terminology", "by agent"}, {"*", "fallback"}});
  EXPECT_EQ(chat.chat(request("exact question", "terminology")), "exact");
  EXPECT_EQ(chat.chat(request("other", "terminology")), "by agent");
  EXPECT_EQ(chat.chat(request("other", "modeling")), "fallback");
}

TEST(ScriptedChat, EchoPlaceholder) {
  ScriptedChatProvider chat(ScriptedChatProvider::Script{{"*", "[{{user}}]"}});
  EXPECT_EQ(chat.chat(request("hello")), "[hello]");
}

TEST(ScriptedChat, MissingEntryFails) {
  ScriptedChatProvider chat(ScriptedChatProvider::Script{{"agent:a", "x"}});
  EXPECT_THROW(chat.chat(request("q", "b")), Error);
}

TEST(ScriptedChat, FromJson) {
  auto chat = ScriptedChatProvider::from_json(nlohmann::json{{"*", "OK"}});
  EXPECT_EQ(chat.chat(request("q")), "OK");
  EXPECT_THROW(ScriptedChatProvider::from_json(nlohmann::json{{"*", 3}}), Error);
}

TEST(ScriptedChat, ConcurrentCallersAllRecorded) {
  ScriptedChatProvider chat(ScriptedChatProvider::Script{{"*", "OK"}});
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 50; ++i) EXPECT_EQ(chat.chat(request("q")), "OK");
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(chat.attempt_count(), 400u);
}

TEST(HashEmbedding, Deterministic) {
  HashEmbeddingProvider embed(8);
  auto a = embed.embed("beamforming");
  auto b = embed.embed("beamforming");
  ASSERT_EQ(a.dimension(), b.dimension());
  for (std::size_t i = 0; i < a.dimension(); ++i) EXPECT_EQ(a[i], b[i]);  // bitwise equal
}

TEST(HashEmbedding, DeterministicAcrossInstances) {
  HashEmbeddingProvider e1(8), e2(8);
  EXPECT_EQ(e1.embed("doa"), e2.embed("doa"));
}

TEST(HashEmbedding, FixedDimension) {
  HashEmbeddingProvider embed(8);
  for (auto t : {"a", "longer text", "x y z", "DOA estimation"}) EXPECT_EQ(embed.embed(t).dimension(), 8u);
}

TEST(HashEmbedding, DistinctInputsDiffer) {
  HashEmbeddingProvider embed(8);
  auto a = embed.embed("DOA estimation");
  auto b = embed.embed("sensor placement");
  std::size_t differing = 0;
  for (std::size_t i = 0; i < 8; ++i) differing += a[i] != b[i];
  EXPECT_GE(differing, 1u);
}

TEST(HashEmbedding, UnitNorm) {
  HashEmbeddingProvider embed(32);
  auto v = embed.embed("norm check");
  double n = 0;
  for (double x : v.values()) n += x * x;
  EXPECT_NEAR(n, 1.0, 1e-12);
}

TEST(HashEmbedding, EmptyTextRejected) {
  HashEmbeddingProvider embed(8);
  EXPECT_THROW(embed.embed(""), Error);
  EXPECT_THROW(embed.embed(" \t"), Error);
}

namespace {
class WrongLengthEmbedder final : public EmbeddingProvider {
 public:
  WrongLengthEmbedder() : EmbeddingProvider(4) {}

 protected:
  std::vector<double> compute(std::string_view) override { return {1.0, 2.0}; }
};
}  // namespace

TEST(Embedding, DimensionMismatchDetected) {
  WrongLengthEmbedder embed;
  try {
    embed.embed("x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
  }
}

TEST(Embedding, NonFiniteValuesRejected) {
  EXPECT_THROW(EmbeddingVector({1.0, std::nan("")}), Error);
  EXPECT_THROW(EmbeddingVector(std::vector<double>{}), Error);
}

TEST(RateGate, EnforcesMinimumInterval) {
  RateGate gate(std::chrono::milliseconds(20));
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 3; ++i) gate.wait();
  auto elapsed = std::chrono::steady_clock::now() - t0;
  EXPECT_GE(elapsed, std::chrono::milliseconds(40));
}

TEST(ProviderConfig, Validation) {
  ProviderConfig c{"http://x", "m", ""};
  EXPECT_NO_THROW(c.validate());
  c.timeout = std::chrono::milliseconds(0);
  EXPECT_THROW(c.validate(), Error);
  c.timeout = std::chrono::milliseconds(10);
  c.max_retries = -1;
  EXPECT_THROW(c.validate(), Error);
}

// ---------------------------------------------------------------------------
// Remote providers against a loopback server speaking the OpenAI shape.

namespace {

class LoopbackServer {
 public:
  LoopbackServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LoopbackServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(OpenAiChat, RequestAndResponseShape) {
  LoopbackServer srv;
  nlohmann::json seen;
  std::string auth;
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"modeled"}}]})", "application/json");
  });
  setenv("MAGRAG_TEST_KEY", "sekret", 1);
  ProviderConfig cfg{srv.endpoint(), "test-model", "MAGRAG_TEST_KEY", std::chrono::milliseconds(5000), 0};
  OpenAiChatProvider chat(cfg);
  auto before = remote_request_count();
  ChatRequest r;
  r.system_prompt = "sys";
  r.user_content = "user";
  r.temperature = 0.2;
  r.max_output = 77;
  EXPECT_EQ(chat.chat(r), "modeled");
  EXPECT_EQ(remote_request_count(), before + 1);
  EXPECT_EQ(auth, "Bearer sekret");
  EXPECT_EQ(seen["model"], "test-model");
  EXPECT_EQ(seen["max_tokens"], 77);
  EXPECT_DOUBLE_EQ(seen["temperature"].get<double>(), 0.2);
  ASSERT_EQ(seen["messages"].size(), 2u);
  EXPECT_EQ(seen["messages"][0]["role"], "system");
  EXPECT_EQ(seen["messages"][0]["content"], "sys");
  EXPECT_EQ(seen["messages"][1]["role"], "user");
  EXPECT_EQ(seen["messages"][1]["content"], "user");
}

TEST(OpenAiChat, RetriesServerErrors) {
  LoopbackServer srv;
  int hits = 0;
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (++hits < 3) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"choices":[{"message":{"content":"third time"}}]})", "application/json");
  });
  ProviderConfig cfg{srv.endpoint(), "m", "", std::chrono::milliseconds(5000), 2};
  OpenAiChatProvider chat(cfg);
  EXPECT_EQ(chat.chat(request("q")), "third time");
  EXPECT_EQ(hits, 3);
}

TEST(OpenAiChat, UnreachableEndpointIsTransportError) {
  // Bind a port, then close the server so nothing listens there.
  std::string endpoint;
  {
    LoopbackServer srv;
    endpoint = srv.endpoint();
  }
  ProviderConfig cfg{endpoint, "m", "", std::chrono::milliseconds(500), 1};
  OpenAiChatProvider chat(cfg);
  try {
    chat.chat(request("q"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::transport);
  }
}

TEST(OpenAiChat, MissingApiKeyVariable) {
  unsetenv("MAGRAG_TEST_ABSENT_KEY");
  ProviderConfig cfg{"http://127.0.0.1:1/v1", "m", "MAGRAG_TEST_ABSENT_KEY"};
  OpenAiChatProvider chat(cfg);
  try {
    chat.chat(request("q"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
}

TEST(OpenAiEmbedding, ParsesVectorsAndChecksDimension) {
  LoopbackServer srv;
  nlohmann::json seen;
  srv.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    res.set_content(R"({"data":[{"embedding":[0.5,-0.25,1.0]}]})", "application/json");
  });
  ProviderConfig cfg{srv.endpoint(), "emb-model", "", std::chrono::milliseconds(5000), 0};
  OpenAiEmbeddingProvider good(cfg, 3);
  auto v = good.embed("keywords");
  EXPECT_EQ(seen["model"], "emb-model");
  EXPECT_EQ(seen["input"], "keywords");
  ASSERT_EQ(v.dimension(), 3u);
  EXPECT_EQ(v[1], -0.25);

  OpenAiEmbeddingProvider wrong(cfg, 4);
  try {
    wrong.embed("keywords");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
  }
}
