#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mkgc/cli.hpp"
#include "mkgc/runio.hpp"

using namespace mkgc;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("cli");

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mkgc_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream os(p, std::ios::binary);
    os << content;
}

// A configuration small enough for test-speed training.
const char* kTinyConfig =
    "d = 16\n"
    "n_heads = 2\n"
    "d_m = 32\n"
    "l_t = 1\n"
    "l_v = 1\n"
    "l_m = 1\n"
    "img_h = 4\n"
    "img_w = 4\n"
    "img_c = 1\n"
    "patch = 2\n"
    "images_per_entity = 2\n"
    "epochs = 2\n"
    "phase1_epochs = 2\n"
    "batch_size = 4\n"
    "eval_every = 2\n"
    "seed = 5\n";

} // namespace

TEST_CASE("kv config parsing, overriding and hashing") {
    const KvConfig kv = KvConfig::parse("a = 1\n# comment\n\nb=2\n  c =  three  \n");
    CHECK(kv.get("a", "") == "1");
    CHECK(kv.get("b", "") == "2");
    CHECK(kv.get("c", "") == "three");
    CHECK(kv.get_size("b", 0) == 2);
    CHECK_THROWS_AS(KvConfig::parse("not a pair\n"), parse_error);
    CHECK_THROWS_AS(kv.get_size("c", 0), parse_error);

    KvConfig a = KvConfig::parse("x = 1\ny = 2\n");
    KvConfig b = KvConfig::parse("y = 2\nx = 1\n");
    CHECK(a.hash_hex() == b.hash_hex());
    b.set("x", "9");
    CHECK(a.hash_hex() != b.hash_hex());
    // meta keys do not change the hash
    KvConfig c = a;
    c.set("timestamp", "2020");
    c.set("command", "train");
    c.set("output_dir", "/somewhere");
    CHECK(a.hash_hex() == c.hash_hex());
}

TEST_CASE("generate writes a manifest before data, then train and eval run end to end") {
    TempDir dir;
    const std::string data_dir = (dir.path / "data").string();
    const std::string cfg_path = (dir.path / "tiny.cfg").string();
    write_file(cfg_path, kTinyConfig);

    int rc = cli::dispatch({"generate", "--task", "link", "--out", data_dir, "--seed", "3",
                            "--config", cfg_path, "--entities", "6", "--relations", "2",
                            "--triples", "10"});
    REQUIRE(rc == 0);
    CHECK(fs::exists(fs::path(data_dir) / "manifest.txt"));
    CHECK(fs::exists(fs::path(data_dir) / "entities.tsv"));
    CHECK(fs::exists(fs::path(data_dir) / "train.tsv"));
    CHECK(fs::exists(fs::path(data_dir) / "images" / "e0_0.img"));

    const std::string out_dir = (dir.path / "run").string();
    rc = cli::dispatch({"train", "--task", "link", "--config", cfg_path, "--data", data_dir,
                        "--out", out_dir});
    REQUIRE(rc == 0);
    CHECK(fs::exists(fs::path(out_dir) / "manifest.txt"));
    CHECK(fs::exists(fs::path(out_dir) / "checkpoint.mkgc"));
    CHECK(fs::exists(fs::path(out_dir) / "report.txt"));
    CHECK(fs::exists(fs::path(out_dir) / "sweep.tsv"));
    const std::string report1 = read_file(fs::path(out_dir) / "report.txt");
    CHECK(report1.find("task=link") != std::string::npos);
    CHECK(report1.find("mr=") != std::string::npos);

    // rerunning from the manifest alone reproduces the report bit-for-bit
    const std::string rerun_dir = (dir.path / "rerun").string();
    rc = cli::dispatch({"train", "--config", (fs::path(out_dir) / "manifest.txt").string(),
                        "--out", rerun_dir});
    REQUIRE(rc == 0);
    CHECK(read_file(fs::path(rerun_dir) / "report.txt") == report1);

    const std::string eval_dir = (dir.path / "eval").string();
    rc = cli::dispatch({"eval", "--task", "link", "--config", cfg_path, "--data", data_dir,
                        "--checkpoint", (fs::path(out_dir) / "checkpoint.mkgc").string(), "--out",
                        eval_dir});
    REQUIRE(rc == 0);
    const std::string eval_report = read_file(fs::path(eval_dir) / "report.txt");
    CHECK(eval_report.find("task=link") != std::string::npos);

    // the trained checkpoint evaluates identically to the training report
    const std::string tail1 = report1.substr(report1.find("mr="));
    const std::string tail2 = eval_report.substr(eval_report.find("mr="));
    CHECK(tail1 == tail2);

    // inspect dumps a trace with the documented row format
    const std::string trace_file = (dir.path / "trace.txt").string();
    rc = cli::dispatch({"inspect", "--trace", "--config", cfg_path, "--data", data_dir,
                        "--checkpoint", (fs::path(out_dir) / "checkpoint.mkgc").string(), "--out",
                        trace_file});
    REQUIRE(rc == 0);
    const std::string trace = read_file(trace_file);
    CHECK(trace.find("layer 0") != std::string::npos);
    CHECK(trace.find("lambda head=0 qrow=0 value=") != std::string::npos);
    CHECK(trace.find("S\n") != std::string::npos);
    CHECK(trace.find("Agg\n") != std::string::npos);
}

TEST_CASE("exit statuses: usage 2, io 1") {
    TempDir dir;
    ::setenv("MKG_OUTPUT_DIR", (dir.path / "out").string().c_str(), 1);
    CHECK(cli::dispatch({"no-such-command"}) == 2);
    CHECK(cli::dispatch({"train", "--task", "link"}) == 2); // missing --data
    CHECK(cli::dispatch({"train", "--task", "nope", "--data", "/nonexistent"}) == 2);
    CHECK(cli::dispatch({"train", "--task", "link", "--data", "/nonexistent/dir"}) == 1);
    CHECK(cli::dispatch({"verify", "--only", "not-a-suite"}) == 2);
    write_file(dir.path / "broken.cfg", "zzz\n");
    CHECK(cli::dispatch({"train", "--task", "link", "--data", dir.str(), "--config",
                         (dir.path / "broken.cfg").string()}) == 3);
    ::unsetenv("MKG_OUTPUT_DIR");
}

TEST_CASE("verify --list names the suites; single suites run fast") {
    CHECK(cli::dispatch({"verify", "--list"}) == 0);
    CHECK(cli::dispatch({"verify", "--only", "templates"}) == 0);
    CHECK(cli::dispatch({"verify", "--only", "kshot-store"}) == 0);
}

TEST_CASE("corrupting the W3 gradient path makes the gradient suite fail loudly") {
    CHECK(cli::dispatch({"verify", "--only", "gradient-full"}) == 0);
    CHECK(cli::dispatch({"verify", "--only", "gradient-full", "--mutate-w3"}) == 3);
}

TEST_CASE("MKG_OUTPUT_DIR is the default output root") {
    TempDir dir;
    const std::string data_dir = (dir.path / "data").string();
    const std::string cfg_path = (dir.path / "tiny.cfg").string();
    write_file(cfg_path, kTinyConfig);
    int rc = cli::dispatch({"generate", "--task", "link", "--out", data_dir, "--seed", "3",
                            "--config", cfg_path, "--entities", "4", "--relations", "2",
                            "--triples", "6"});
    REQUIRE(rc == 0);

    const std::string env_out = (dir.path / "env_out").string();
    ::setenv("MKG_OUTPUT_DIR", env_out.c_str(), 1);
    rc = cli::dispatch({"train", "--task", "link", "--config", cfg_path, "--data", data_dir,
                        "--epochs", "1"});
    ::unsetenv("MKG_OUTPUT_DIR");
    REQUIRE(rc == 0);
    CHECK(fs::exists(fs::path(env_out) / "manifest.txt"));
    CHECK(fs::exists(fs::path(env_out) / "report.txt"));
}

TEST_CASE("k-shot training averages reports over seeds") {
    TempDir dir;
    const std::string data_dir = (dir.path / "data").string();
    const std::string cfg_path = (dir.path / "tiny.cfg").string();
    write_file(cfg_path, kTinyConfig);
    int rc = cli::dispatch({"generate", "--task", "re", "--out", data_dir, "--seed", "3",
                            "--config", cfg_path, "--classes", "2", "--examples", "8"});
    REQUIRE(rc == 0);

    const std::string out_dir = (dir.path / "kshot").string();
    rc = cli::dispatch({"train", "--task", "re", "--config", cfg_path, "--data", data_dir,
                        "--out", out_dir, "--k-shot", "1", "--seeds", "2", "--epochs", "1"});
    REQUIRE(rc == 0);
    CHECK(fs::exists(fs::path(out_dir) / "seed_5" / "report.txt"));
    CHECK(fs::exists(fs::path(out_dir) / "seed_6" / "report.txt"));
    CHECK(fs::exists(fs::path(out_dir) / "report.txt"));
}

TEST_SUITE_END();
