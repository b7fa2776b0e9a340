#include <gtest/gtest.h>

#include <atomic>

#include "epstory/remote_embedding.hpp"
#include "support.hpp"

using namespace epstory;
using testsupport::FakeServer;

namespace {

/// Answers every request with unit vectors e_0 of dimension `dim`.
std::vector<std::string> unit_replies(const std::string& request, std::size_t dim) {
    auto j = nlohmann::json::parse(request);
    nlohmann::json vectors = nlohmann::json::array();
    for (std::size_t k = 0; k < j["texts"].size(); ++k) {
        std::vector<double> v(dim, 0.0);
        v[0] = 1.0;
        vectors.push_back(v);
    }
    return {nlohmann::json{{"id", j["id"]}, {"dim", dim}, {"vectors", vectors}}.dump()};
}

RemoteOptions options_for(const FakeServer& server, std::size_t dim = 2) {
    RemoteOptions o;
    o.endpoint = server.endpoint();
    o.dimension = dim;
    o.timeout_ms = 5000;
    return o;
}

}  // namespace

TEST(RemoteEmbedding, GoldenTranscriptSingleWindow) {
    FakeServer server([](const std::string&) { return std::vector<std::string>{R"({"id":0,"dim":2,"vectors":[[0.6,0.8]]})"}; });
    RemoteEmbedder emb(options_for(server));
    std::vector<std::string> texts{"[u1] ProcessCreate via cmd.exe: image=whoami.exe"};
    auto out = emb.embed_texts(texts);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0], (std::vector<double>{0.6, 0.8}));
    const std::vector<std::string> expected{
        R"(> {"id":0,"texts":["[u1] ProcessCreate via cmd.exe: image=whoami.exe"]})",
        R"(< {"id":0,"dim":2,"vectors":[[0.6,0.8]]})",
    };
    EXPECT_EQ(server.transcript(), expected);
    EXPECT_EQ(emb.id(), "remote:" + server.endpoint());
}

TEST(RemoteEmbedding, WrongDimensionIsFatal) {
    FakeServer server([](const std::string& r) { return unit_replies(r, 3); });
    RemoteEmbedder emb(options_for(server, 2));
    std::vector<std::string> texts{"a"};
    EXPECT_THROW(emb.embed_texts(texts), ProtocolError);
}

TEST(RemoteEmbedding, HalfNormVectorIsRejected) {
    FakeServer server([](const std::string&) { return std::vector<std::string>{R"({"id":0,"dim":2,"vectors":[[0.5,0.0]]})"}; });
    RemoteEmbedder emb(options_for(server));
    std::vector<std::string> texts{"a"};
    try {
        emb.embed_texts(texts);
        FAIL();
    } catch (const InvalidVectorError& e) {
        EXPECT_EQ(e.window_index(), 0u);
    }
}

TEST(RemoteEmbedding, UnreachableEndpointIsATransportError) {
    RemoteOptions o;
    o.endpoint = "tcp://127.0.0.1:" + std::to_string(testsupport::unused_port());
    o.dimension = 2;
    o.timeout_ms = 2000;
    RemoteEmbedder emb(o);
    std::vector<std::string> texts{"a", "b"};
    EXPECT_THROW(emb.embed_texts(texts), TransportError);
}

TEST(RemoteEmbedding, BatchesArePipelinedAndReassembledById) {
    // Replies to each pair of requests in reverse order.
    std::vector<std::string> held;
    FakeServer server([&](const std::string& r) {
        auto j = nlohmann::json::parse(r);
        std::vector<std::string> replies;
        nlohmann::json vectors = nlohmann::json::array();
        for (const auto& t : j["texts"]) {
            double a = t.get<std::string>().size() % 2 ? 0.6 : 0.8;
            vectors.push_back({a, std::sqrt(1 - a * a)});
        }
        held.push_back(nlohmann::json{{"id", j["id"]}, {"dim", 2}, {"vectors", vectors}}.dump());
        if (held.size() == 2 || j["texts"].size() < 3) {
            replies.assign(held.rbegin(), held.rend());
            held.clear();
        }
        return replies;
    });
    auto o = options_for(server);
    o.batch_size = 3;
    o.max_in_flight = 2;
    RemoteEmbedder emb(o);
    std::vector<std::string> texts{"a", "bb", "c", "dd", "e", "ff", "g"};
    auto out = emb.embed_texts(texts);
    ASSERT_EQ(out.size(), texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_DOUBLE_EQ(out[i][0], texts[i].size() % 2 ? 0.6 : 0.8) << i;
    int requests = 0;
    for (const auto& line : server.transcript()) requests += line.starts_with(">");
    EXPECT_EQ(requests, 3);
}

TEST(RemoteEmbedding, AdoptsDimensionFromFirstResponse) {
    FakeServer server([](const std::string& r) { return unit_replies(r, 5); });
    auto o = options_for(server, 0);
    RemoteEmbedder emb(o);
    EXPECT_EQ(emb.dimension(), 0u);
    std::vector<std::string> texts{"a"};
    auto out = emb.embed_texts(texts);
    EXPECT_EQ(emb.dimension(), 5u);
    EXPECT_EQ(out[0].size(), 5u);
}

TEST(RemoteEmbedding, ServiceErrorsAndMalformedResponses) {
    for (const std::string reply : {R"({"id":0,"error":"model not loaded"})", "not json", R"({"dim":2})",
                                    R"({"id":9,"dim":2,"vectors":[[1,0]]})", R"({"id":0,"dim":2,"vectors":[]})",
                                    R"({"id":0,"dim":2,"vectors":[["x",1]]})", R"({"id":0,"vectors":[[1,0]]})"}) {
        FakeServer server([&](const std::string&) { return std::vector<std::string>{reply}; });
        RemoteEmbedder emb(options_for(server));
        std::vector<std::string> texts{"a"};
        EXPECT_THROW(emb.embed_texts(texts), ProtocolError) << reply;
    }
}

TEST(RemoteEmbedding, RetriesAfterDroppedConnection) {
    std::atomic<int> calls{0};
    FakeServer server([&](const std::string& r) {
        if (calls++ == 0) return std::vector<std::string>{FakeServer::kHangUp};
        return unit_replies(r, 2);
    });
    std::vector<std::string> texts{"a", "b"};
    {
        auto o = options_for(server);
        o.retries = 1;
        RemoteEmbedder emb(o);
        auto out = emb.embed_texts(texts);
        EXPECT_EQ(out.size(), 2u);
        EXPECT_EQ(server.connections(), 2);
    }

    calls = 0;
    auto no_retry = options_for(server);
    RemoteEmbedder strict(no_retry);
    EXPECT_THROW(strict.embed_texts(texts), TransportError);
}

TEST(RemoteEmbedding, SilentServerTimesOut) {
    FakeServer server([](const std::string&) { return std::vector<std::string>{}; });
    auto o = options_for(server);
    o.timeout_ms = 200;
    RemoteEmbedder emb(o);
    std::vector<std::string> texts{"a"};
    EXPECT_THROW(emb.embed_texts(texts), TransportError);
}

TEST(RemoteEmbedding, ProcessEndpointSpeaksTheSameProtocol) {
    // `cat` echoes the request back: a well-framed line with no vectors.
    RemoteOptions o;
    o.endpoint = "exec:cat";
    o.dimension = 2;
    o.timeout_ms = 5000;
    RemoteEmbedder emb(o);
    std::vector<std::string> texts{"a"};
    try {
        emb.embed_texts(texts);
        FAIL();
    } catch (const ProtocolError& e) {
        EXPECT_NE(std::string(e.what()).find("dim"), std::string::npos);
    }
}

TEST(RemoteEmbedding, EndpointParsing) {
    auto tcp = parse_endpoint("tcp://localhost:9000");
    EXPECT_EQ(tcp.kind, RemoteEndpoint::Kind::Tcp);
    EXPECT_EQ(tcp.host, "localhost");
    EXPECT_EQ(tcp.port, "9000");
    auto ex = parse_endpoint("exec:python3 -m embed_service --stdio");
    EXPECT_EQ(ex.kind, RemoteEndpoint::Kind::Process);
    EXPECT_EQ(ex.argv, (std::vector<std::string>{"python3", "-m", "embed_service", "--stdio"}));
    for (const char* bad : {"localhost:9000", "tcp://nohost", "tcp://:9000", "tcp://h:", "exec:", "http://x:1"})
        EXPECT_THROW(parse_endpoint(bad), ArgumentError) << bad;
}

TEST(RemoteEmbedding, WorksThroughEmbedWindows) {
    FakeServer server([](const std::string& r) { return unit_replies(r, 4); });
    RemoteEmbedder emb(options_for(server, 4));
    std::vector<Window> windows{{"s", 0, "x", 1}, {"s", 1, "y", 1}};
    auto out = embed_windows(windows, emb);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[1].provider_id, "remote:" + server.endpoint());
}
