#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "mcam/cli.hpp"
#include "mcam/director.hpp"
#include "mcam/eval.hpp"
#include "mcam/pipeline.hpp"
#include "mcam/tensor_io.hpp"

using namespace mcam;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

}  // namespace

TEST_CASE("usage errors") {
    CHECK(cli({}).code == kExitUsage);
    const Run bad = cli({"generate", "--instruction", "x", "--frobnicate"});
    CHECK(bad.code == kExitUsage);
    CHECK(bad.err.rfind("error: usage: ", 0) == 0);
    CHECK(cli({"train-cam"}).code == kExitUsage);
    CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("camera training needs a base model") {
    const fs::path root = fs::temp_directory_path() / "mcam_test_cli_staging";
    fs::remove_all(root);
    const Run r = cli({"train-cam", "ZoomIn", "--data", (root / "data").string(), "--out", (root / "models").string()});
    CHECK(r.code == kExitStaging);
    CHECK(r.err.rfind("error: staging: ", 0) == 0);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
    fs::remove_all(root);
}

TEST_CASE("end-to-end smoke run") {
    const fs::path root = fs::temp_directory_path() / "mcam_test_cli_smoke";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string data = (root / "data").string(), models = (root / "models").string();
    write_text_file(root / "gen.cfg",
                    "frames = 4\nsteps = 2\nmodel_dir = " + models +
                        "\ndirector_endpoint = http://127.0.0.1:9\ndirector_timeout = 1\ndirector_retries = 0\n");
    const std::string cfg = (root / "gen.cfg").string();

    REQUIRE(cli({"simulate-data", "--per-motion", "1", "--frames", "4", "--out", data, "--seed", "3"}).code == 0);
    const std::vector<std::string> budget{"--data", data, "--epochs", "1", "--max-steps", "1"};
    auto with = [&](std::vector<std::string> head) {
        head.insert(head.end(), budget.begin(), budget.end());
        head.insert(head.end(), {"--out", models});
        return head;
    };
    REQUIRE(cli(with({"train-base"})).code == 0);
    for (const char* m : {"ZoomIn", "ZoomOut", "PanLeft", "PanRight", "TiltUp", "TiltDown"})
        REQUIRE(cli(with({"train-cam", m})).code == 0);
    REQUIRE(cli(with({"train-control"})).code == 0);
    CHECK(cli(with({"train-cam", "Spin"})).err.rfind("error: parameter: ", 0) == 0);

    const std::string instruction =
        "Starting with a long shot of a field and blue sky, and gradually focusing on a house in the distance. "
        "Then the camera moves to the left, and large fields appear, then the house moves out of view";
    const std::string video = (root / "video").string();
    const Run gen = cli({"--config", cfg, "generate", "--no-llm", "--instruction", instruction, "--out", video});
    REQUIRE(gen.code == 0);
    const StoryBoard board = read_json_file(fs::path(video) / "storyboard.json").get<StoryBoard>();
    CHECK(board.provenance == Provenance::Fallback);
    REQUIRE(board.scenes.size() == 2);
    CHECK(read_video(video).num_frames() == 8);

    // An unreachable chat endpoint degrades to the grammar instead of failing.
    const std::string video2 = (root / "video2").string();
    const Run llm = cli({"--config", cfg, "generate", "--instruction", instruction, "--out", video2});
    REQUIRE(llm.code == 0);
    CHECK(llm.err.find("director:") != std::string::npos);
    CHECK(read_video(video2).frames.storage() == read_video(video).frames.storage());

    const Run ev = cli({"evaluate", video});
    REQUIRE(ev.code == 0);
    const auto report = read_json_file(root / "video.metrics.json");
    CHECK(report.at("version") == std::string(kMetricsVersion));
    CHECK(report.at("scenes").size() == 2);
    CHECK(cli({"evaluate", (root / "missing").string()}).err.rfind("error: io: ", 0) == 0);
    fs::remove_all(root);
}
