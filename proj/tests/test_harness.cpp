#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "mubo/error.hpp"
#include "mubo/harness.hpp"
#include "oracles.hpp"
#include "tmpdir.hpp"

using namespace mubo;
using namespace mubo::harness;

namespace {

RunConfig toy_config(const TempDir& tmp, std::size_t minority, std::size_t majority, baselines::MethodKind method) {
    const auto ds = oracle::two_gaussians(minority, majority, 2, 2.5, 13);
    data::write_csv(ds, tmp.path() / "toy.csv");
    RunConfig cfg;
    cfg.dataset_path = tmp.path() / "toy.csv";
    cfg.method.kind = method;
    cfg.n_runs = 3;
    cfg.base_seed = 40;
    cfg.output_dir = tmp.path() / "out";
    cfg.mubo.max_iter = 6;
    cfg.mubo.max_epochs = 3;
    return cfg;
}

void forget_wall_time(RunReport& r) {
    for (auto& run : r.runs) {
        run.wall_seconds = 0.0;
    }
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("load_config reads every key and resolves relative paths") {
    TempDir tmp;
    const auto path = tmp.write("exp.toml",
                                "[dataset]\n"
                                "path = \"data/x.csv\"\n"
                                "label_column = \"cls\"\n"
                                "positive_label = \"b\"\n"
                                "[run]\n"
                                "method = \"smote\"\n"
                                "test_fraction = 0.25\n"
                                "runs = 3\n"
                                "seed = 17\n"
                                "output_dir = \"out\"\n"
                                "workers = 2\n"
                                "smote_k = 3\n"
                                "[mubo]\n"
                                "max_iter = 7\n"
                                "grad_tol = 1e-4\n"
                                "max_epochs = 9\n"
                                "batch_size = 16\n"
                                "learning_rate = 0.001\n"
                                "initial_majority_loss = 12.5\n");
    const auto cfg = load_config(path);
    CHECK(cfg.dataset_path == tmp.path() / "data/x.csv");
    CHECK(cfg.label_column == "cls");
    CHECK(cfg.positive_label == "b");
    CHECK(cfg.method.kind == baselines::MethodKind::smote);
    CHECK(cfg.method.smote_k == 3);
    CHECK(cfg.test_fraction == 0.25);
    CHECK(cfg.n_runs == 3);
    CHECK(cfg.base_seed == 17);
    CHECK(cfg.output_dir == tmp.path() / "out");
    CHECK(cfg.workers == 2);
    CHECK(cfg.mubo.max_iter == 7);
    CHECK(cfg.mubo.grad_tol == 1e-4);
    CHECK(cfg.mubo.max_epochs == 9);
    CHECK(cfg.mubo.batch_size == 16);
    CHECK(cfg.mubo.learning_rate == 0.001);
    CHECK(cfg.mubo.initial_majority_loss == 12.5);

    CHECK_THROWS_AS(load_config(tmp.write("typo.toml", "[run]\nrunz = 3\n")), ConfigError);
    CHECK_THROWS_AS(load_config(tmp.write("num.toml", "[run]\nruns = many\n")), ConfigError);
    CHECK_THROWS_AS(load_config(tmp.path() / "absent.toml"), ConfigError);
}

TEST_CASE("RunConfig validation") {
    RunConfig cfg;
    cfg.dataset_path = "x.csv";
    CHECK_NOTHROW(cfg.validate());
    cfg.n_runs = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.n_runs = 1;
    cfg.test_fraction = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("single run without sampling on a 20-point set") {
    TempDir tmp;
    auto cfg = toy_config(tmp, 6, 14, baselines::MethodKind::none);
    cfg.n_runs = 1;
    const auto report = run_experiment(cfg);
    REQUIRE(report.runs.size() == 1);
    const auto& run = report.runs[0];
    CHECK(run.seed == 40);
    CHECK(run.test_rows == 4);
    CHECK(run.train_rows == 16);
    CHECK_FALSE(run.trace_file.has_value());
    for (const auto& name : metric_names()) {
        const auto& s = report.aggregate.at(name);
        const auto v = metric_value(run.metrics, name);
        CHECK(s.mean == v);
        if (v) {
            CHECK(*s.variance == 0.0);
            CHECK(s.count == 1);
        }
    }
}

TEST_CASE("identical configs give identical reports") {
    TempDir tmp;
    auto cfg = toy_config(tmp, 15, 60, baselines::MethodKind::mubo);
    auto a = run_experiment(cfg);
    cfg.workers = 3;
    auto b = run_experiment(cfg);
    forget_wall_time(a);
    forget_wall_time(b);
    b.config.workers = a.config.workers;
    CHECK(a == b);
    for (std::size_t i = 0; i < a.runs.size(); ++i) {
        CHECK(a.runs[i].seed == 40 + i);
        REQUIRE(a.runs[i].trace_file.has_value());
        CHECK(a.runs[i].trace.size() == 6);
    }
}

TEST_CASE("emit_report round trip, flat table and null for absent values") {
    TempDir tmp;
    auto cfg = toy_config(tmp, 15, 60, baselines::MethodKind::mubo);
    auto report = run_experiment(cfg);
    // an absent score must be written as null, not 0
    report.runs[1].metrics.precision_minority.reset();
    report.runs[1].test_losses.falsely_classified_majority.reset();
    report.aggregate = aggregate(report.runs);

    emit_report(report, cfg.output_dir);
    const auto parsed = parse_report(cfg.output_dir / "report.json");
    CHECK(parsed == report);

    const auto table = read_runs_table(cfg.output_dir / "runs.csv");
    CHECK(table.size() == static_cast<std::size_t>(cfg.n_runs));
    CHECK_FALSE(table[1].metrics.precision_minority.has_value());
    CHECK(slurp(cfg.output_dir / "runs.csv").find(",null,") != std::string::npos);
    CHECK(slurp(cfg.output_dir / "report.json").find("\"precision_minority\": null") != std::string::npos);

    // aggregate recomputed from the flat table
    const auto again = aggregate(table);
    for (const auto& name : metric_names()) {
        const auto& x = report.aggregate.at(name);
        const auto& y = again.at(name);
        CHECK(x.count == y.count);
        if (x.mean) {
            CHECK(std::abs(*x.mean - *y.mean) <= 1e-12);
            CHECK(std::abs(*x.variance - *y.variance) <= 1e-12);
        }
    }

    for (const auto& run : parsed.runs) {
        REQUIRE(run.trace_file.has_value());
        CHECK(std::filesystem::exists(cfg.output_dir / *run.trace_file));
        double last = std::numeric_limits<double>::infinity();
        for (const auto& e : run.trace) {
            if (e.accepted) {
                CHECK(e.majority_loss <= last);
                last = e.majority_loss;
            }
        }
    }
}

TEST_CASE("aggregate uses population variance over present values") {
    std::vector<RunRecord> runs(4);
    runs[0].metrics.f1 = 0.5;
    runs[1].metrics.f1 = 0.7;
    runs[2].metrics.f1 = std::nullopt;
    runs[3].metrics.f1 = 0.9;
    runs[3].status = RunStatus::diverged;
    const auto agg = aggregate(runs);
    CHECK(agg.at("f1").count == 2);
    CHECK(*agg.at("f1").mean == doctest::Approx(0.6));
    CHECK(*agg.at("f1").variance == doctest::Approx(0.01));
    CHECK_FALSE(agg.at("recall").mean.has_value());
}

TEST_CASE("dataset errors carry file positions") {
    TempDir tmp;
    RunConfig cfg;
    cfg.dataset_path = tmp.write("bad.csv", "a,label\n1,0\n2,1\nx,0\n");
    cfg.output_dir = tmp.path() / "out";
    try {
        run_experiment(cfg);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.row() == 4);
        CHECK(e.column() == 1);
    }
}

TEST_CASE("divergent runs are recorded without aborting") {
    TempDir tmp;
    auto cfg = toy_config(tmp, 10, 40, baselines::MethodKind::none);
    cfg.mubo.learning_rate = 1e300;
    const auto report = run_experiment(cfg);
    REQUIRE(report.runs.size() == 3);
    for (const auto& r : report.runs) {
        CHECK(r.status == RunStatus::diverged);
        CHECK_FALSE(r.error.empty());
    }
    CHECK(report.aggregate.at("f1").count == 0);
}

#ifdef MUBO_CLI
TEST_CASE("command-line exit codes") {
    TempDir tmp;
    toy_config(tmp, 10, 40, baselines::MethodKind::random_undersample);
    const auto write_config = [&](const std::string& name, double lr) {
        std::ostringstream s;
        s << "[dataset]\npath = \"toy.csv\"\n[run]\nmethod = \"rus\"\nruns = 2\n[mubo]\nmax_epochs = 2\n"
          << "learning_rate = " << lr << "\n";
        return tmp.write(name, s.str());
    };
    const auto run = [&](const std::string& args) {
        const std::string cmd = std::string(MUBO_CLI) + " " + args + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };
    const auto ok = write_config("ok.toml", 1e-3);
    CHECK(run("run --config " + ok.string() + " --out " + (tmp.path() / "o1").string()) == 0);
    CHECK(std::filesystem::exists(tmp.path() / "o1" / "runs.csv"));
    CHECK(run("report " + (tmp.path() / "o1").string()) == 0);
    CHECK(std::filesystem::exists(tmp.path() / "o1" / "aggregate.json"));
    CHECK(run("run --config " + ok.string() + " --method bogus") == 1);
    const auto diverge = write_config("div.toml", 1e300);
    CHECK(run("run --config " + diverge.string() + " --out " + (tmp.path() / "o2").string()) == 2);
    CHECK(run("run --config " + tmp.write("bad.toml", "[dataset]\npath = \"nope.csv\"\n").string()) == 1);
}
#endif
