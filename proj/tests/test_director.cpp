#include "doctest.h"

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "mcam/director.hpp"
#include "mcam/errors.hpp"
#include "mcam/tensor_io.hpp"
#include "test_util.hpp"

using namespace mcam;
using namespace mcam::testing;

namespace {

struct Expected {
    std::string instruction;
    std::vector<std::pair<std::string, std::string>> scenes;
};

std::vector<Expected> fixture() {
    std::vector<Expected> out;
    for (const auto& item : read_json_file(std::string(MCAM_TEST_DATA) + "/director_fixture.json")) {
        Expected e;
        e.instruction = item.at("instruction").get<std::string>();
        for (const auto& s : item.at("scenes")) e.scenes.emplace_back(s.at(0).get<std::string>(), s.at(1).get<std::string>());
        out.push_back(std::move(e));
    }
    return out;
}

const char* kFieldReply =
    "[Scene 1: \"field and blue sky, house in the distance\", Action: ZoomIn]\n"
    "[Scene 2: \"large fields\", Action: PanLeft]";

}  // namespace

TEST_CASE("fallback grammar reproduces the fixture storyboards") {
    const auto cases = fixture();
    REQUIRE(cases.size() == 20);
    for (const auto& c : cases) {
        CAPTURE(c.instruction);
        const StoryBoard board = fallback_parse(c.instruction);
        CHECK(board.provenance == Provenance::Fallback);
        CHECK(board.instruction == c.instruction);
        REQUIRE(board.scenes.size() == c.scenes.size());
        for (size_t i = 0; i < c.scenes.size(); ++i) {
            CHECK(board.scenes[i].index == static_cast<int64_t>(i) + 1);
            CHECK(board.scenes[i].description == c.scenes[i].first);
            CHECK(board.scenes[i].action.name() == c.scenes[i].second);
            CHECK(board.scenes[i].clip_length == kDefaultClipLength);
        }
    }
}

TEST_CASE("fallback grammar details") {
    SUBCASE("tilt phrases win over focus phrases") {
        const auto b = fallback_parse("The camera tilts up while focusing on the moon.");
        REQUIRE(b.scenes.size() == 1);
        CHECK(b.scenes[0].action == MotionPattern(BasicMotion::TiltUp));
        CHECK(b.scenes[0].description == "moon");
    }
    SUBCASE("an instruction with only a camera move keeps its text as the description") {
        const auto b = fallback_parse("The camera zooms in.");
        REQUIRE(b.scenes.size() == 1);
        CHECK(b.scenes[0].action == MotionPattern(BasicMotion::ZoomIn));
        CHECK(b.scenes[0].description == "The camera zooms in");
    }
    SUBCASE("deterministic") {
        const std::string text = fixture()[7].instruction;
        CHECK(fallback_parse(text) == fallback_parse(text));
    }
    SUBCASE("blank instruction") {
        CHECK_THROWS_AS(fallback_parse("   "), InputError);
        CHECK_THROWS_AS(decompose(""), InputError);
    }
    SUBCASE("a custom phrase table") {
        PhraseTable t = PhraseTable::defaults();
        t.motion.insert(t.motion.begin(), {"swoops", BasicMotion::TiltDown});
        CHECK(fallback_parse("An eagle swoops over the canyon.", t).scenes[0].action ==
              MotionPattern(BasicMotion::TiltDown));
        CHECK_THROWS_AS(PhraseTable::from_json(nlohmann::json::parse(R"({"motion": [["spins", "Spin"]]})")),
                        ValidationError);
    }
}

TEST_CASE("storyboard JSON round trip") {
    StoryBoard b = fallback_parse(fixture()[0].instruction);
    b.scenes[1].clip_length = 24;
    const nlohmann::json j = b;
    CHECK(j.at("provenance") == "FALLBACK");
    CHECK(j.at("scenes").at(0).at("action") == "ZoomIn");
    CHECK(j.get<StoryBoard>() == b);
    nlohmann::json bad = j;
    bad["provenance"] = "ORACLE";
    CHECK_THROWS_AS(bad.get<StoryBoard>(), FormatError);
}

TEST_CASE("parsing chat replies") {
    SUBCASE("bracketed records") {
        const StoryBoard b = parse_llm_response(kFieldReply);
        REQUIRE(b.scenes.size() == 2);
        CHECK(b.scenes[0].description == "field and blue sky, house in the distance");
        CHECK(b.scenes[0].action == MotionPattern(BasicMotion::ZoomIn));
        CHECK(b.scenes[1].description == "large fields");
        CHECK(b.scenes[1].action == MotionPattern(BasicMotion::PanLeft));
        CHECK(b.diagnostics.empty());
    }
    SUBCASE("records over two lines with spaced action names") {
        const StoryBoard b = parse_llm_response(
            "Sure. Here is the decomposition:\n"
            "Scene 1: \xE2\x80\x9C" "beach, waves lap against the reef\xE2\x80\x9D\n"
            "Action: Zoom In\n"
            "Scene 2: large area of sea\n"
            "Action: Tilt Down.\n");
        REQUIRE(b.scenes.size() == 2);
        CHECK(b.scenes[0].description == "beach, waves lap against the reef");
        CHECK(b.scenes[0].action == MotionPattern(BasicMotion::ZoomIn));
        CHECK(b.scenes[1].description == "large area of sea");
        CHECK(b.scenes[1].action == MotionPattern(BasicMotion::TiltDown));
    }
    SUBCASE("gaps in the numbering are closed with a warning") {
        const StoryBoard b =
            parse_llm_response("[Scene 1: \"a\", Action: PanLeft]\n[Scene 3: \"b\", Action: PanRight]");
        REQUIRE(b.scenes.size() == 2);
        CHECK(b.scenes[1].index == 2);
        REQUIRE(b.diagnostics.size() == 1);
        CHECK(b.diagnostics[0].find("renumbered") != std::string::npos);
    }
    SUBCASE("unknown action") {
        CHECK_THROWS_AS(parse_llm_response("[Scene 1: \"a\", Action: Spin]"), ValidationError);
    }
    SUBCASE("no records") {
        CHECK_THROWS_AS(parse_llm_response("I cannot help with that."), FormatError);
    }
}

TEST_CASE("validation against the motion pool") {
    const DenoiserNet net(tiny_unet(), small_vocab(), 3);
    CamOperatorPool pool;
    pool.initialize_all(net, 5);
    StoryBoard b = parse_llm_response("[Scene 1: \"a\", Action: ZoomIn]\n[Scene 2: \"b\", Action: TiltUp]");
    b.scenes[0].clip_length = 0;
    const StoryBoard ok = validate(b, pool);
    CHECK(ok.scenes[0].clip_length == kDefaultClipLength);

    pool.erase(BasicMotion::TiltUp);
    try {
        validate(b, pool);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("TiltUp") != std::string::npos);
    }
    StoryBoard still = parse_llm_response("[Scene 1: \"a\", Action: Static]");
    CHECK_NOTHROW(validate(still, CamOperatorPool{}));
    b.scenes[1].description = " ";
    pool.initialize_all(net, 5);
    CHECK_THROWS_AS(validate(b, pool), ValidationError);
}

TEST_CASE("director client contract against a canned transport") {
    const std::string instruction = fixture()[0].instruction;
    DirectorConfig cfg;
    cfg.retries = 2;

    SUBCASE("a well-formed reply is used as is") {
        auto stub = std::make_shared<CannedTransport>(std::vector<std::optional<std::string>>{kFieldReply});
        const DirectorClient client(cfg, stub);
        const StoryBoard b = decompose(instruction, &client);
        CHECK(b.provenance == Provenance::Llm);
        CHECK(b.instruction == instruction);
        REQUIRE(stub->prompts().size() == 1);
        CHECK(stub->prompts()[0] == build_director_prompt(instruction));
        CHECK(stub->prompts()[0].rfind(kDirectorPrompt, 0) == 0);
        CHECK(stub->prompts()[0].find(instruction) != std::string::npos);
        CHECK(b.scenes == fallback_parse(instruction).scenes);
    }
    SUBCASE("a failed attempt is retried") {
        auto stub = std::make_shared<CannedTransport>(
            std::vector<std::optional<std::string>>{std::nullopt, "no scenes here", kFieldReply});
        const DirectorClient client(cfg, stub);
        CHECK(client.request(instruction).provenance == Provenance::Llm);
        CHECK(stub->prompts().size() == 3);
    }
    SUBCASE("malformed replies fall back to the grammar") {
        auto stub = std::make_shared<CannedTransport>(
            std::vector<std::optional<std::string>>{"[Scene 1: \"x\", Action: Barrel Roll]"});
        const DirectorClient client(cfg, stub);
        CHECK_THROWS_AS(client.request(instruction), DecompositionError);
        const StoryBoard b = decompose(instruction, &client);
        CHECK(b.provenance == Provenance::Fallback);
        CHECK(b == fallback_parse(instruction));
        REQUIRE_FALSE(b.diagnostics.empty());
        CHECK(b.diagnostics[0].find("validation") != std::string::npos);
        CHECK(stub->prompts().size() == 6);
    }
    SUBCASE("transport failures fall back to the grammar") {
        auto stub = std::make_shared<CannedTransport>(std::vector<std::optional<std::string>>{std::nullopt});
        const DirectorClient client(cfg, stub);
        const StoryBoard b = decompose(instruction, &client);
        CHECK(b.provenance == Provenance::Fallback);
        CHECK(b.diagnostics[0].find("io") != std::string::npos);
    }
    SUBCASE("configuration checks") {
        DirectorConfig bad = cfg;
        bad.timeout_s = 0;
        CHECK_THROWS_AS(DirectorClient(bad, std::make_shared<CannedTransport>(
                                                std::vector<std::optional<std::string>>{})),
                        ParameterError);
        CHECK_THROWS_AS(DirectorClient(cfg, nullptr), ParameterError);
        const nlohmann::json j = cfg;
        CHECK(j.get<DirectorConfig>().model == cfg.model);
    }
}

TEST_CASE("HTTP transport speaks the chat completion protocol") {
    httplib::Server server;
    std::string seen_auth, seen_model, seen_content;
    server.Post("/api/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        const auto body = nlohmann::json::parse(req.body);
        seen_model = body.at("model").get<std::string>();
        seen_content = body.at("messages").at(0).at("content").get<std::string>();
        const nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", kFieldReply}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    DirectorConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/api";
    cfg.model = "stub-model";
    cfg.token_env = "MCAM_TEST_DIRECTOR_TOKEN";
    setenv("MCAM_TEST_DIRECTOR_TOKEN", "secret", 1);
    const DirectorClient client(cfg, std::make_shared<HttpTransport>(cfg));
    const StoryBoard b = client.request("a field");
    CHECK(b.scenes.size() == 2);
    CHECK(seen_auth == "Bearer secret");
    CHECK(seen_model == "stub-model");
    CHECK(seen_content == build_director_prompt("a field"));

    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/missing";
    CHECK_THROWS_AS(HttpTransport(cfg).complete("x", 2.0), IoError);
    cfg.endpoint = "ftp://nowhere";
    CHECK_THROWS_AS(HttpTransport(cfg).complete("x", 2.0), ParameterError);

    server.stop();
    worker.join();
    unsetenv("MCAM_TEST_DIRECTOR_TOKEN");
}
