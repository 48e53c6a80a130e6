#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cartoondiff/checkpoint.hpp"
#include "cartoondiff/dataset.hpp"
#include "cartoondiff/image_io.hpp"
#include "cli.hpp"
#include "json.hpp"

using namespace cartoondiff;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run_cli(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch_dir(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / "cartoondiff_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p)
{
    std::ifstream f(p);
    return json::parse(f);
}

/// Dataset plus a few-step model, small enough for a unit test.
fs::path tiny_model(const fs::path& dir)
{
    const auto data = (dir / "shapes.cdds").string();
    REQUIRE(run_cli({"gen-data", "--n", "16", "--size", "16", "--seed", "3", "--out", data}).code == 0);
    const auto r = run_cli({"train", "--data", data, "--out", (dir / "run").string(), "--steps", "3", "--batch", "4",
                            "--embed-dim", "16", "--depth", "1", "--heads", "2", "--log-every", "1"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    return dir / "run" / "model.cdif";
}

}  // namespace

TEST_CASE("usage errors exit with code 1")
{
    auto r = run_cli({});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("gen-data") != std::string::npos);

    CHECK(run_cli({"frobnicate"}).code == cli::kExitUsage);
    CHECK(run_cli({"gen-data", "--out", "x", "--bogus", "1"}).code == cli::kExitUsage);
    CHECK(run_cli({"gen-data"}).code == cli::kExitUsage);
    CHECK(run_cli({"gen-data", "--out", "x", "--channels", "2"}).code == cli::kExitUsage);
    CHECK(run_cli({"sample", "--checkpoint", "m", "--out-dir", "d", "--snapshots", "301"}).code == cli::kExitUsage);
}

TEST_CASE("help and version exit with code 0")
{
    auto r = run_cli({"--help"});
    CHECK(r.code == cli::kExitOk);
    for (const char* sub : {"gen-data", "train", "sample", "trajectory", "ablate", "inspect"}) {
        CHECK(r.out.find(sub) != std::string::npos);
    }
    r = run_cli({"trajectory", "--help"});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.find("--snapshots") != std::string::npos);
    CHECK(r.out.find("--config") != std::string::npos);
    r = run_cli({"--version"});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out == std::string(cli::kToolVersion) + "\n");
}

TEST_CASE("runtime failures exit with code 2")
{
    const auto dir = scratch_dir("runtime");
    const auto r = run_cli({"sample", "--checkpoint", (dir / "missing.cdif").string(), "--out-dir",
                            (dir / "out").string()});
    CHECK(r.code == cli::kExitRuntime);
    CHECK(r.err.find("missing.cdif") != std::string::npos);
    CHECK(run_cli({"inspect", (dir / "missing.cdif").string()}).code == cli::kExitRuntime);
}

TEST_CASE("gen-data writes the dataset and a manifest")
{
    const auto dir = scratch_dir("gen");
    const auto data = dir / "shapes.cdds";
    const auto r = run_cli({"gen-data", "--n", "10", "--size", "16", "--seed", "9", "--channels", "3", "--out",
                            data.string()});
    REQUIRE(r.code == 0);
    CHECK(load_dataset(data.string()) == generate_dataset(10, 16, 9, 3, 0.3));

    const auto m = read_json(dir / "shapes.cdds.manifest.json");
    CHECK(m["tool"] == "cartoondiff");
    CHECK(m["command"] == "gen-data");
    CHECK(m["version"] == cli::kToolVersion);
    CHECK(m["seed"] == 9);
    CHECK(m["config"]["n"] == 10);
    CHECK(m["config"]["channels"] == 3);
    CHECK(m["outputs"].size() == 1);
    CHECK(m["wall_time_s"].is_number());
    CHECK(m["argv"][0] == "gen-data");
}

TEST_CASE("config file supplies defaults and flags override it")
{
    const auto dir = scratch_dir("config");
    const auto cfg = dir / "gen.cfg";
    {
        std::ofstream f(cfg);
        f << "# dataset settings\nn = 5\nsize = 16\nseed = 4   # trailing comment\n";
    }
    const auto data = dir / "a.cdds";
    REQUIRE(run_cli({"gen-data", "--config", cfg.string(), "--seed", "8", "--out", data.string()}).code == 0);
    CHECK(load_dataset(data.string()) == generate_dataset(5, 16, 8));
    REQUIRE(run_cli({"gen-data", "--config=" + cfg.string(), "--out", data.string()}).code == 0);
    CHECK(load_dataset(data.string()) == generate_dataset(5, 16, 4));

    {
        std::ofstream f(cfg);
        f << "colour = red\n";
    }
    CHECK(run_cli({"gen-data", "--config", cfg.string(), "--out", data.string()}).code == cli::kExitUsage);
    {
        std::ofstream f(cfg);
        f << "just words\n";
    }
    CHECK(run_cli({"gen-data", "--config", cfg.string(), "--out", data.string()}).code == cli::kExitUsage);
    CHECK_THROWS_AS(cli::read_config_file(cfg.string()), FormatError);
    CHECK_THROWS_AS(cli::read_config_file((dir / "none.cfg").string()), IoError);
}

TEST_CASE("train, sample and inspect end to end")
{
    const auto dir = scratch_dir("flow");
    const auto model = tiny_model(dir);
    CHECK(fs::exists(dir / "run" / "manifest.json"));
    const auto loss = slurp(dir / "run" / "loss.csv");
    CHECK(loss.rfind("step,loss\n", 0) == 0);
    CHECK(std::count(loss.begin(), loss.end(), '\n') == 4);

    const auto ckpt = load_checkpoint(model.string());
    CHECK(ckpt.config.image_size == 16);
    CHECK(ckpt.config.embed_dim == 16);

    auto r = run_cli({"inspect", model.string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("embed_dim") != std::string::npos);
    CHECK(r.out.find(std::to_string(ckpt.parameter_count())) != std::string::npos);

    const auto out = dir / "samples";
    r = run_cli({"sample", "--checkpoint", model.string(), "--out-dir", out.string(), "--steps", "5", "--count", "2",
                 "--class", "1", "--snapshots", "1000,400"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    for (const char* f : {"sample_0000.pgm", "sample_0001.pgm", "sample_0000_t0400_xt.pgm", "sample_0001_t1000_x0.pgm",
                          "samples.jsonl", "manifest.json"}) {
        CHECK_MESSAGE(fs::exists(out / f), f);
    }
    const auto img = decode_image((out / "sample_0000.pgm").string());
    CHECK(img.shape() == Shape{1, 16, 16});

    std::istringstream lines(slurp(out / "samples.jsonl"));
    std::string line;
    std::vector<json> rows;
    while (std::getline(lines, line)) {
        rows.push_back(json::parse(line));
    }
    REQUIRE(rows.size() == 3);
    CHECK(rows[0]["type"] == "config");
    CHECK(rows[0]["config"]["lambda"] == 4.0);
    CHECK(rows[1]["class"] == 1);
    CHECK(rows[2]["snapshots"].size() == 2);
}

TEST_CASE("identical arguments give bit-identical outputs")
{
    const auto dir = scratch_dir("determinism");
    const auto model = tiny_model(dir);
    const auto first = slurp(model);
    REQUIRE(run_cli({"train", "--data", (dir / "shapes.cdds").string(), "--out", (dir / "again").string(), "--steps",
                     "3", "--batch", "4", "--embed-dim", "16", "--depth", "1", "--heads", "2"})
                .code == 0);
    CHECK(slurp(dir / "again" / "model.cdif") == first);
    CHECK(slurp(dir / "again" / "loss.csv") == slurp(dir / "run" / "loss.csv"));

    std::vector<std::string> outputs;
    for (const char* name : {"a", "b"}) {
        REQUIRE(run_cli({"ablate", "--checkpoint", model.string(), "--out-dir", (dir / name).string(), "--steps",
                         "5", "--n", "2", "--sigmas", "0,250"})
                    .code == 0);
        outputs.push_back(slurp(dir / name / "ablation.csv") + slurp(dir / name / "ablation_sheet.ppm"));
    }
    CHECK(outputs[0] == outputs[1]);
    const auto sheet = decode_image((dir / "a" / "ablation_sheet.ppm").string());
    CHECK(sheet.dim(0) == 3);

    const auto r = run_cli({"trajectory", "--checkpoint", model.string(), "--out-dir", (dir / "traj").string(),
                            "--steps", "10", "--runs", "2", "--snapshots", "500,100,0"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto csv = slurp(dir / "traj" / "trajectory.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(fs::exists(dir / "traj" / "trajectory_sheet.ppm"));
}
