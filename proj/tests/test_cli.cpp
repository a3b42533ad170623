#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "support.hpp"

#include "droneguard/cli.hpp"
#include "droneguard/config.hpp"

using namespace droneguard;
namespace fs = std::filesystem;

TEST_CASE("config documents") {
    SUBCASE("defaults") {
        const Config c;
        CHECK(c.mining.min_support == 0.01);
        CHECK(c.window.window_len == 10);
        CHECK(c.detectors.kmeans_k == 5);
        CHECK(parse_config("{}").seed == 1);
    }
    SUBCASE("flat and nested keys") {
        const auto a = parse_config(R"({"rules.min_support": 0.2, "window": {"len": 20}, "detectors": {"features": ["roll", "pitch"]}})");
        CHECK(a.mining.min_support == 0.2);
        CHECK(a.window.window_len == 20);
        CHECK(a.detectors.features == std::vector{telemetry::Field::Roll, telemetry::Field::Pitch});
    }
    SUBCASE("round trip") {
        Config c;
        apply_override(c, "detectors.nu=0.1");
        apply_override(c, "rules.numeric_features=roll,throttle");
        apply_override(c, "seed=77");
        const auto back = parse_config(write_config(c));
        CHECK(write_config(back) == write_config(c));
        CHECK(back.detectors.nu == 0.1);
        CHECK(back.seed == 77);
        CHECK(detector_config(back).seed == 77);
        CHECK(config_keys().size() == 27);
    }
    SUBCASE("rejections") {
        CHECK_ERRC(parse_config(R"({"rules.minsupport": 0.2})"), Errc::InvalidConfig);
        CHECK_ERRC(parse_config(R"({"rules.min_support": "high"})"), Errc::InvalidConfig);
        CHECK_ERRC(parse_config(R"({"rules.min_support": 0})"), Errc::InvalidConfig);
        CHECK_ERRC(parse_config(R"({"detectors.nu": 1.5})"), Errc::InvalidConfig);
        CHECK_ERRC(parse_config(R"({"window.len": 0})"), Errc::InvalidConfig);
        CHECK_ERRC(parse_config(R"({"detectors.features": ["airspeed"]})"), Errc::InvalidConfig);
        CHECK_ERRC(parse_config("[1]"), Errc::InvalidConfig);
        Config c;
        CHECK_ERRC(apply_override(c, "no-equals-sign"), Errc::InvalidConfig);
    }
}

namespace {

struct Tool {
    std::string out;
    std::string err;
    int code = -1;
};

Tool run_tool(std::vector<std::string> args, const std::string& input = "") {
    std::istringstream in(input);
    std::ostringstream out;
    std::ostringstream err;
    Tool t;
    t.code = cli::run(args, in, out, err);
    t.out = out.str();
    t.err = err.str();
    return t;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::size_t count_lines_starting(const std::string& text, const std::string& prefix) {
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) n += line.rfind(prefix, 0) == 0 ? 1 : 0;
    return n;
}

/// Scratch workspace with a small trained model, shared by the CLI cases.
struct Workspace {
    fs::path root;
    Workspace() {
        root = fs::temp_directory_path() / ("droneguard-cli-" + std::to_string(std::random_device{}()));
        fs::remove_all(root);
        fs::create_directories(root);
        auto r = run_tool({"--seed", "1", "--out", (root / "train").string(), "simulate", "--count", "30"});
        REQUIRE(r.code == 0);
        r = run_tool({"--out", (root / "model").string(), "mine", (root / "train").string()});
        REQUIRE(r.code == 0);
        r = run_tool({"--out", (root / "model").string(), "fit", (root / "train").string()});
        REQUIRE(r.code == 0);
    }
    ~Workspace() { fs::remove_all(root); }
    std::string rules() const { return (root / "model" / "rules.json").string(); }
    std::string models() const { return (root / "model" / "models.json").string(); }
    std::string dir(const std::string& name) const { return (root / name).string(); }
};

Workspace& workspace() {
    static Workspace w;
    return w;
}

}  // namespace

TEST_CASE("cli simulate writes the run files") {
    auto& w = workspace();
    for (const char* f : {"log.csv", "commands.csv", "mission.json", "labels.csv"}) {
        CHECK(fs::exists(fs::path(w.dir("train")) / "run_000" / f));
    }
    const auto r = run_tool({"--seed", "5", "--out", w.dir("roll"), "simulate", "--fault",
                             "sensor_stuck:feature=roll,value=3.14159265,start=0,end=999999999"});
    CHECK(r.code == 0);
    CHECK(slurp(fs::path(w.dir("roll")) / "log.csv").find(",3.14159265,") != std::string::npos);
    CHECK(run_tool({"simulate", "--fault", "hail:size=2"}).code == cli::kExitUsage);
    CHECK(run_tool({"simulate", "--count", "0"}).code == cli::kExitUsage);
}

TEST_CASE("cli mine and fit") {
    auto& w = workspace();
    const auto mined = slurp(w.rules());
    CHECK(mined.find("\"rules\"") != std::string::npos);

    const auto single = run_tool({"--out", w.dir("single"), "mine", w.dir("train") + "/run_003"});
    CHECK(single.code == 0);
    CHECK(single.out.rfind("mined ", 0) == 0);

    fs::create_directories(w.dir("empty"));
    CHECK(run_tool({"mine", w.dir("empty")}).code == cli::kExitUsage);
    CHECK(run_tool({"--set", "detectors.nu=0", "fit", w.dir("train")}).code == cli::kExitUsage);
    CHECK(run_tool({"--set", "detectors.nu=2", "fit", w.dir("train")}).code == cli::kExitUsage);

    // refitting with the same seed gives the same bytes
    const auto again = run_tool({"--out", w.dir("refit"), "fit", w.dir("train")});
    CHECK(again.code == 0);
    CHECK(slurp(fs::path(w.dir("refit")) / "models.json") == slurp(w.models()));
}

TEST_CASE("cli detect exit codes") {
    auto& w = workspace();
    REQUIRE(run_tool({"--seed", "900", "--out", w.dir("clean"), "simulate"}).code == 0);
    const auto clean = run_tool({"detect", "--rules", w.rules(), "--models", w.models(), w.dir("clean")});
    CHECK_MESSAGE(clean.code == cli::kExitClean, clean.out);
    CHECK(clean.out.find("alerts=0") != std::string::npos);

    REQUIRE(run_tool({"--seed", "5", "--out", w.dir("roll"), "simulate", "--fault",
                      "sensor_stuck:feature=roll,value=3.14159265,start=0,end=999999999"})
                .code == 0);
    const auto roll = run_tool({"detect", "--rules", w.rules(), "--models", w.models(), w.dir("roll")});
    CHECK(roll.code == cli::kExitAnomalies);
    CHECK(roll.out.find("recall=100.00%") != std::string::npos);

    CHECK(run_tool({"detect", "--rules", w.rules(), "--models", w.dir("nope.json"), w.dir("clean")}).code ==
          cli::kExitUsage);
    CHECK(run_tool({"detect", "--models", w.models(), w.dir("clean")}).code == cli::kExitUsage);
}

TEST_CASE("cli stream") {
    auto& w = workspace();
    REQUIRE(run_tool({"--seed", "901", "--out", w.dir("sclean"), "simulate"}).code == 0);
    const auto clean_log = slurp(fs::path(w.dir("sclean")) / "log.csv");
    const std::vector<std::string> base{"stream", "--rules", w.rules(), "--models", w.models(), "--no-optics",
                                        "--mission", w.dir("sclean") + "/mission.json"};
    const auto clean = run_tool(base, clean_log);
    CHECK(clean.code == cli::kExitClean);
    CHECK(count_lines_starting(clean.out, "ALERT") == 0);
    CHECK(count_lines_starting(clean.out, "ts=") == std::count(clean_log.begin(), clean_log.end(), '\n') - 1);

    // a trailing command section is not telemetry
    const auto with_cmds = run_tool(base, clean_log + "\ncmd_id,issue_ms,enact_ms\n1,3000,3400\n");
    CHECK(with_cmds.err.empty());
    CHECK(count_lines_starting(with_cmds.out, "ts=") == count_lines_starting(clean.out, "ts="));

    REQUIRE(run_tool({"--seed", "902", "--out", w.dir("crash"), "simulate", "--fault", "engine_cutoff:at=40000"}).code ==
            0);
    const auto crash = run_tool({"stream", "--rules", w.rules(), "--models", w.models(), "--mission",
                                 w.dir("crash") + "/mission.json"},
                                slurp(fs::path(w.dir("crash")) / "log.csv"));
    CHECK(crash.code == cli::kExitAnomalies);
    CHECK(count_lines_starting(crash.out, "ALERT") >= 1);

    // a broken row in the middle is reported and skipped
    std::istringstream lines(clean_log);
    std::string text;
    std::string line;
    for (int i = 0; std::getline(lines, line) && i < 20; ++i) {
        text += line + "\n";
        if (i == 10) text += "this,is,not,a,row\n";
    }
    const auto broken = run_tool(base, text);
    CHECK(broken.code == cli::kExitClean);
    CHECK(broken.err.find("error line 12") != std::string::npos);
    CHECK(count_lines_starting(broken.out, "ts=") == 19);
}

TEST_CASE("cli eval and bench on labeled runs") {
    auto& w = workspace();
    REQUIRE(run_tool({"--seed", "5", "--out", w.dir("roll"), "simulate", "--fault",
                      "sensor_stuck:feature=roll,value=3.14159265,start=0,end=999999999"})
                .code == 0);
    const auto e = run_tool({"--out", w.dir("report"), "eval", "--rules", w.rules(), "--models", w.models(), "--no-optics",
                             w.dir("roll")});
    CHECK(e.code == 0);
    CHECK(e.out.find("roll") != std::string::npos);
    CHECK(fs::exists(fs::path(w.dir("report")) / "report.json"));
    const auto b = run_tool({"bench", "--rules", w.rules(), "--models", w.models(), "--max-points", "5", w.dir("roll")});
    CHECK(b.code == 0);
    CHECK(b.out.find("pipeline with OPTICS") != std::string::npos);
    CHECK(run_tool({"eval"}).code == cli::kExitUsage);
}

TEST_CASE("cli usage") {
    CHECK(run_tool({}).code == cli::kExitUsage);
    CHECK(run_tool({"fly"}).code == cli::kExitUsage);
    const auto help = run_tool({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("simulate") != std::string::npos);
    CHECK(run_tool({"--config", "/nonexistent.json", "simulate"}).code == cli::kExitUsage);
    CHECK(run_tool({"--set", "bogus.key=1", "simulate"}).code == cli::kExitUsage);
}
