// End-to-end checks of the motionmap binary: exit codes, artifacts,
// determinism, and agreement with the in-process pipeline.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "motionmap/dataset.hpp"
#include "motionmap/neural.hpp"
#include "motionmap/sensor_io.hpp"
#include "motionmap/synth.hpp"

using namespace motionmap;
namespace fs = std::filesystem;

namespace {

const std::string kCli = MOTIONMAP_CLI_PATH;

struct WorkDir {
    fs::path dir;
    WorkDir() {
        dir = fs::temp_directory_path() / ("motionmap_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~WorkDir() { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("exit codes: usage 2, missing file 3, bad data 4") {
    WorkDir wd;
    CHECK(run("definitely-not-a-command") == 2);
    CHECK(run("train") == 2);  // missing required args
    CHECK(run("preprocess " + wd.path("absent.jsonl") + " -o " + wd.path("x.jsonl")) == 3);
    CHECK(run("generate --no-such-flag -o " + wd.path("x.jsonl")) == 2);

    std::ofstream bad(wd.path("bad.jsonl"));
    bad << "this is not json\n";
    bad.close();
    CHECK(run("preprocess " + wd.path("bad.jsonl") + " -o " + wd.path("x.jsonl")) == 4);

    std::ofstream notmodel(wd.path("notmodel.json"));
    notmodel << "{\"format\":\"other\"}\n";
    notmodel.close();
    CHECK(run("predict " + wd.path("notmodel.json") + " --input " + wd.path("bad.jsonl") +
              " -o " + wd.path("y.jsonl")) == 4);
}

TEST_CASE("global flags are accepted after the subcommand too") {
    WorkDir wd;
    REQUIRE(run("generate --duration 2 --seed 7 -o " + wd.path("a.jsonl")) == 0);
    REQUIRE(run("--seed 7 generate --duration 2 -o " + wd.path("b.jsonl")) == 0);
    CHECK(slurp(wd.path("a.jsonl")) == slurp(wd.path("b.jsonl")));
}

TEST_CASE("generate produces frames, truth, calibration and a manifest") {
    WorkDir wd;
    REQUIRE(run("--seed 5 generate --duration 2 --clean -o " + wd.path("raw.jsonl")) == 0);
    CHECK(fs::exists(wd.path("raw.jsonl")));
    CHECK(fs::exists(wd.path("raw.truth.jsonl")));
    CHECK(fs::exists(wd.path("raw.cal.json")));
    CHECK(fs::exists(wd.path("raw.jsonl.manifest.json")));

    const auto frames = read_frames(wd.path("raw.jsonl"));
    CHECK(frames.frames.size() == 101);  // 2 s at 50 Hz inclusive
    CHECK(frames.rejected_lines == 0);
}

TEST_CASE("rerunning a command with the same seed is byte-identical") {
    WorkDir wd;
    REQUIRE(run("--seed 42 generate --duration 2 -o " + wd.path("a.jsonl")) == 0);
    REQUIRE(run("--seed 42 generate --duration 2 -o " + wd.path("b.jsonl")) == 0);
    CHECK(slurp(wd.path("a.jsonl")) == slurp(wd.path("b.jsonl")));
    CHECK(slurp(wd.path("a.truth.jsonl")) == slurp(wd.path("b.truth.jsonl")));

    REQUIRE(run("preprocess " + wd.path("a.jsonl") + " -o " + wd.path("a_data.jsonl")) == 0);
    REQUIRE(run("preprocess " + wd.path("b.jsonl") + " -o " + wd.path("b_data.jsonl")) == 0);
    CHECK(slurp(wd.path("a_data.jsonl")) == slurp(wd.path("b_data.jsonl")));

    const std::string train_args = " --arch dfnn -n 4 -l 1 --epochs 3 ";
    REQUIRE(run("--seed 42 train " + wd.path("a_data.jsonl") + train_args + "-o " +
                wd.path("a_model.json")) == 0);
    REQUIRE(run("--seed 42 train " + wd.path("a_data.jsonl") + train_args + "-o " +
                wd.path("b_model.json")) == 0);
    CHECK(slurp(wd.path("a_model.json")) == slurp(wd.path("b_model.json")));

    REQUIRE(run("predict " + wd.path("a_model.json") + " --input " + wd.path("a.jsonl") +
                " -o " + wd.path("a_pred.jsonl")) == 0);
    REQUIRE(run("predict " + wd.path("a_model.json") + " --input " + wd.path("a.jsonl") +
                " -o " + wd.path("b_pred.jsonl")) == 0);
    CHECK(slurp(wd.path("a_pred.jsonl")) == slurp(wd.path("b_pred.jsonl")));
}

TEST_CASE("the file pipeline matches the in-process composition") {
    WorkDir wd;
    REQUIRE(run("--seed 11 generate --duration 2 -o " + wd.path("raw.jsonl")) == 0);

    SynthConfig cfg;
    cfg.duration_s = 2.0;
    cfg.seed = 11;
    const SynthSession session = generate_session(cfg);
    write_session(session, wd.path("mem.jsonl"));
    CHECK(slurp(wd.path("raw.jsonl")) == slurp(wd.path("mem.jsonl")));

    REQUIRE(run("preprocess " + wd.path("raw.jsonl") + " -o " + wd.path("data.jsonl")) == 0);
    const auto tracker = extract_tracker_stream(session.frames);
    const auto aligned = align_streams(session.frames, tracker, session.cal);
    const auto resampled = resample(filter_incomplete(aligned).records, 30.0);
    write_aligned(resampled, wd.path("mem_data.jsonl"));
    CHECK(slurp(wd.path("data.jsonl")) == slurp(wd.path("mem_data.jsonl")));
}

TEST_CASE("predict emits one tool state per frame and latency stats") {
    WorkDir wd;
    REQUIRE(run("--seed 13 generate --duration 3 -o " + wd.path("raw.jsonl")) == 0);
    REQUIRE(run("preprocess " + wd.path("raw.jsonl") + " -o " + wd.path("data.jsonl")) == 0);
    REQUIRE(run("--seed 13 train " + wd.path("data.jsonl") +
                " --arch dfnn -n 4 -l 1 --epochs 2 -o " + wd.path("model.json")) == 0);
    REQUIRE(run("predict " + wd.path("model.json") + " --input " + wd.path("raw.jsonl") +
                " -o " + wd.path("pred.jsonl")) == 0);

    std::size_t frame_lines = 0, pred_lines = 0;
    {
        std::ifstream f(wd.path("raw.jsonl"));
        std::string line;
        while (std::getline(f, line))
            if (!line.empty()) ++frame_lines;
    }
    {
        std::ifstream f(wd.path("pred.jsonl"));
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            ++pred_lines;
            CHECK(line.find("\"phi\"") != std::string::npos);
            CHECK(line.find("\"jaw\"") != std::string::npos);
        }
    }
    CHECK(frame_lines == pred_lines);

    const std::string manifest = slurp(wd.path("pred.jsonl.manifest.json"));
    CHECK(manifest.find("per_frame_p99_ms") != std::string::npos);
}

TEST_CASE("eval prints a metrics table and writes a report") {
    WorkDir wd;
    REQUIRE(run("--seed 17 generate --duration 3 -o " + wd.path("raw.jsonl")) == 0);
    REQUIRE(run("preprocess " + wd.path("raw.jsonl") + " -o " + wd.path("data.jsonl")) == 0);
    REQUIRE(run("--seed 17 train " + wd.path("data.jsonl") +
                " --arch dfnn -n 4 -l 1 --epochs 2 -o " + wd.path("model.json")) == 0);
    REQUIRE(run("eval " + wd.path("model.json") + " " + wd.path("data.jsonl") + " -o " +
                wd.path("report.json") + " --csv " + wd.path("report.csv") + " >" +
                wd.path("stdout.txt")) == 0);
    const std::string table = slurp(wd.path("stdout.txt"));
    CHECK(table.find("test") != std::string::npos);
    CHECK(table.find("r2") != std::string::npos);
    const std::string report = slurp(wd.path("report.json"));
    CHECK(report.find("\"train\"") != std::string::npos);
    const std::string csv = slurp(wd.path("report.csv"));
    CHECK(csv.rfind("set,mse,r2", 0) == 0);
}

TEST_CASE("MOTIONMAP_LOG=info writes progress to stderr") {
    WorkDir wd;
    const std::string cmd = "MOTIONMAP_LOG=info " + kCli + " --seed 23 generate --duration 1 -o " +
                            wd.path("raw.jsonl") + " 2>" + wd.path("err.txt");
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    const std::string err = slurp(wd.path("err.txt"));
    CHECK(err.find("[info]") != std::string::npos);
    CHECK(err.find("generated") != std::string::npos);
}

TEST_CASE("importance and pca commands write their reports") {
    WorkDir wd;
    REQUIRE(run("--seed 19 generate --duration 4 -o " + wd.path("raw.jsonl")) == 0);
    REQUIRE(run("preprocess " + wd.path("raw.jsonl") + " -o " + wd.path("data.jsonl")) == 0);
    REQUIRE(run("--seed 19 importance " + wd.path("data.jsonl") + " -o " +
                wd.path("imp.json") + " --csv " + wd.path("imp.csv")) == 0);
    const std::string imp = slurp(wd.path("imp.json"));
    CHECK(imp.find("th_j2") != std::string::npos);
    const std::string csv = slurp(wd.path("imp.csv"));
    CHECK(csv.rfind("feature,output,importance", 0) == 0);

    REQUIRE(run("--seed 19 pca " + wd.path("data.jsonl") + " -k 5 -o " +
                wd.path("pca.json")) == 0);
    const std::string pca = slurp(wd.path("pca.json"));
    CHECK(pca.find("explained_variance_ratio") != std::string::npos);
}
