#include <doctest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedac/data.hpp"
#include "fedac/matrix.hpp"

namespace fs = std::filesystem;

namespace {

std::string binary_path() {
  const char* bin = std::getenv("FEDAC_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "FEDAC_BIN must point at the fedac binary");
  return bin;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "fedac_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct CommandResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CommandResult run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path out_file = scratch / "stdout.txt";
  const fs::path err_file = scratch / "stderr.txt";
  const std::string command = binary_path() + " " + args + " > " + out_file.string() + " 2> " +
                              err_file.string();
  const int status = std::system(command.c_str());
  CommandResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
  };
  result.out = slurp(out_file);
  result.err = slurp(err_file);
  return result;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE_MESSAGE(in.good(), path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<double> parse_csv_row(const std::string& line) {
  std::vector<double> row;
  std::istringstream in(line);
  std::string token;
  while (std::getline(in, token, ',')) row.push_back(std::stod(token));
  return row;
}

/// A six-client synthetic config that runs in well under a second.
std::string small_config() {
  return R"({
  "run": {
    "rounds": 2, "seed": 5, "eta": 0.05, "mu": 0.0, "lambda": 0.0,
    "k_init": 2, "reduction_dim": 4, "sample_fraction": 1.0,
    "local_epochs": 1, "batch_size": 8, "map_refresh_period": 50, "cnt_period": 10
  },
  "model": {"hidden_sizes": [6]},
  "data": {
    "source": "synthetic",
    "synthetic": {
      "groups": 2, "clients_per_group": 3, "input_dim": 5, "classes": 3,
      "task_shift": 1.0, "noise": 0.2, "size_min": 30, "size_max": 40
    }
  }
})";
}

fs::path write_small_config(const fs::path& dir) {
  const fs::path path = dir / "config.json";
  write_file(path, small_config());
  return path;
}

}  // namespace

TEST_CASE("cli: run writes the full artifact set") {
  const fs::path dir = fresh_dir("run_artifacts");
  const fs::path config = write_small_config(dir);
  const fs::path out = dir / "out";

  CommandResult r =
      run_cli("run --config " + config.string() + " --out " + out.string(), dir);
  CHECK(r.exit_code == 0);

  const std::string metrics = read_file(out / "metrics.csv");
  auto metric_lines = lines_of(metrics);
  REQUIRE(metric_lines.size() == 3);
  CHECK(metric_lines[0] == "round,mean_acc,std_acc,mean_loss,K,gc_mean,gc_std,ari");

  const std::string trace = read_file(out / "cluster_trace.csv");
  auto trace_lines = lines_of(trace);
  CHECK(trace_lines[0] == "round,K,cluster,dist_intra,dist_inter,g_c,member_count");
  CHECK(trace_lines.size() > 1);

  const std::string echo = read_file(out / "config_echo.json");
  CHECK(echo.find("\"eta\": 0.05") != std::string::npos);
  CHECK(echo.find("\"dir\": \"" + out.string() + "\"") != std::string::npos);

  CHECK(fs::exists(out / "snapshot" / "clients.bin"));
  CHECK(fs::exists(out / "snapshot" / "centers.bin"));
  CHECK(fs::exists(out / "snapshot" / "partitions.csv"));
}

TEST_CASE("cli: the seed flag makes reruns identical and seeds distinct") {
  const fs::path dir = fresh_dir("run_seeds");
  const fs::path config = write_small_config(dir);
  const fs::path a = dir / "a";
  const fs::path b = dir / "b";
  const fs::path c = dir / "c";

  const std::string base = "run --config " + config.string();
  CHECK(run_cli(base + " --seed 7 --out " + a.string(), dir).exit_code == 0);
  CHECK(run_cli(base + " --seed 7 --out " + b.string(), dir).exit_code == 0);
  CHECK(run_cli(base + " --seed 8 --out " + c.string(), dir).exit_code == 0);

  CHECK(read_file(a / "metrics.csv") == read_file(b / "metrics.csv"));
  CHECK(read_file(a / "metrics.csv") != read_file(c / "metrics.csv"));
}

TEST_CASE("cli: --set overrides reach the run and the echo") {
  const fs::path dir = fresh_dir("run_set");
  const fs::path config = write_small_config(dir);
  const fs::path out = dir / "out";

  CommandResult r = run_cli("run --config " + config.string() +
                                " --set run.rounds=3 --set run.k_init=1 --out " + out.string(),
                            dir);
  CHECK(r.exit_code == 0);
  auto metric_lines = lines_of(read_file(out / "metrics.csv"));
  CHECK(metric_lines.size() == 4);
  for (std::size_t i = 1; i < metric_lines.size(); ++i) {
    auto row = parse_csv_row(metric_lines[i]);
    CHECK(row[4] == 1.0);  // K pinned by k_init=1 with tuning quiet
  }
  const std::string echo = read_file(out / "config_echo.json");
  CHECK(echo.find("\"rounds\": 3") != std::string::npos);

  const fs::path out0 = dir / "out0";
  CHECK(run_cli("run --config " + config.string() + " --set run.rounds=0 --out " +
                    out0.string(),
                dir)
            .exit_code == 0);
  CHECK(lines_of(read_file(out0 / "metrics.csv")).size() == 1);
}

TEST_CASE("cli: config mistakes exit with code 2 and name the key") {
  const fs::path dir = fresh_dir("run_bad_config");

  const fs::path missing = dir / "missing_eta.json";
  write_file(missing, R"({"run": {"rounds": 1}, "data": {"source": "synthetic"}})");
  CommandResult r = run_cli("run --config " + missing.string(), dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("run.eta") != std::string::npos);

  const fs::path unknown = dir / "unknown.json";
  write_file(unknown,
             R"({"run": {"rounds": 1, "eta": 0.1, "bogus": 3}, "data": {"source": "synthetic"}})");
  r = run_cli("run --config " + unknown.string(), dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("run.bogus") != std::string::npos);

  const fs::path config = write_small_config(dir);
  r = run_cli("run --config " + config.string() + " --set run.nope=1", dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("run.nope") != std::string::npos);

  const fs::path malformed = dir / "broken.json";
  write_file(malformed, "{\"run\": ");
  r = run_cli("run --config " + malformed.string(), dir);
  CHECK(r.exit_code == 2);

  r = run_cli("run --config " + (dir / "absent.json").string(), dir);
  CHECK(r.exit_code == 2);
}

TEST_CASE("cli: partition report lists every client") {
  const fs::path dir = fresh_dir("report_partition");
  const fs::path config = write_small_config(dir);
  const fs::path out = dir / "out";
  REQUIRE(run_cli("run --config " + config.string() + " --out " + out.string(), dir)
              .exit_code == 0);

  CommandResult r = run_cli("report --dir " + out.string() + " --kind partition", dir);
  CHECK(r.exit_code == 0);
  auto lines = lines_of(r.out);
  REQUIRE(lines.size() == 7);  // header plus six clients
  CHECK(lines[0] == "client_id,train_size,test_size,class_0,class_1,class_2");
  for (int i = 1; i <= 6; ++i) {
    auto row = parse_csv_row(lines[i]);
    CHECK(row[0] == i - 1);
    CHECK(row[1] + row[2] >= 30);
  }
}

TEST_CASE("cli: similarity report is self-consistent") {
  const fs::path dir = fresh_dir("report_similarity");
  const fs::path config = write_small_config(dir);
  const fs::path out = dir / "out";
  REQUIRE(run_cli("run --config " + config.string() + " --out " + out.string(), dir)
              .exit_code == 0);

  CommandResult r = run_cli("report --dir " + out.string() + " --kind similarity", dir);
  CHECK(r.exit_code == 0);
  auto lines = lines_of(r.out);

  auto block = [&](const std::string& name) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].rfind("# " + name + " ", 0) != 0) continue;
      std::istringstream head(lines[i].substr(2 + name.size()));
      int rows = 0, cols = 0;
      head >> rows >> cols;
      fedac::RealMatrix m(rows, cols);
      for (int x = 0; x < rows; ++x) {
        auto row = parse_csv_row(lines[i + 1 + x]);
        REQUIRE(static_cast<int>(row.size()) == cols);
        for (int y = 0; y < cols; ++y) m.at(x, y) = row[y];
      }
      return m;
    }
    FAIL("missing block " << name);
    return fedac::RealMatrix();
  };

  fedac::RealMatrix lrcos = block("lrcos");
  REQUIRE(lrcos.rows == 6);
  REQUIRE(lrcos.cols == 6);
  for (int i = 0; i < 6; ++i) {
    CHECK(std::abs(lrcos.at(i, i) - 1.0) < 1e-9);
    for (int j = 0; j < 6; ++j) {
      CHECK(lrcos.at(i, j) <= 1.0 + 1e-12);
      CHECK(lrcos.at(i, j) >= -1.0 - 1e-12);
      CHECK(std::abs(lrcos.at(i, j) - lrcos.at(j, i)) < 1e-12);
    }
  }

  fedac::RealMatrix centroid = block("lrcos_centroid");
  CHECK(centroid.rows == 6);
  CHECK(centroid.cols >= 1);

  fedac::RealMatrix l2 = block("l2");
  for (int i = 0; i < 6; ++i) CHECK(l2.at(i, i) == 0.0);

  // The KL block must agree with a direct recomputation from the histograms.
  fedac::RealMatrix kl = block("kl");
  std::ifstream parts(out / "snapshot" / "partitions.csv");
  auto histograms = fedac::read_partition_histograms(parts);
  REQUIRE(histograms.size() == 6);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      std::vector<double> p(histograms[i].begin(), histograms[i].end());
      std::vector<double> q(histograms[j].begin(), histograms[j].end());
      CHECK(std::abs(kl.at(i, j) - fedac::label_kl(p, q)) < 1e-9);
    }
  }
}

TEST_CASE("cli: cluster report streams the trace file") {
  const fs::path dir = fresh_dir("report_clusters");
  const fs::path config = write_small_config(dir);
  const fs::path out = dir / "out";
  REQUIRE(run_cli("run --config " + config.string() + " --out " + out.string(), dir)
              .exit_code == 0);

  CommandResult r = run_cli("report --dir " + out.string() + " --kind clusters", dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out == read_file(out / "cluster_trace.csv"));
}

TEST_CASE("cli: report rejects unknown kinds and missing directories") {
  const fs::path dir = fresh_dir("report_bad");
  CommandResult r = run_cli("report --dir " + dir.string() + " --kind novelty", dir);
  CHECK(r.exit_code == 2);

  r = run_cli("report --dir " + (dir / "nope").string() + " --kind partition", dir);
  CHECK(r.exit_code == 1);

  r = run_cli("inspect --dir " + dir.string(), dir);
  CHECK(r.exit_code == 2);
}

TEST_CASE("cli: a one-axis sweep covers every value") {
  const fs::path dir = fresh_dir("sweep_one");
  const fs::path config = write_small_config(dir);
  const fs::path out = dir / "sweep";

  CommandResult r = run_cli("sweep --config " + config.string() + " --grid mu=0,0.5 --out " +
                                out.string(),
                            dir);
  CHECK(r.exit_code == 0);
  auto lines = lines_of(read_file(out / "summary.csv"));
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "run.mu,final_mean_acc,status");
  CHECK(lines[1].rfind("0,", 0) == 0);
  CHECK(lines[2].rfind("0.5,", 0) == 0);
  for (std::size_t i = 1; i < lines.size(); ++i)
    CHECK(lines[i].substr(lines[i].rfind(',') + 1) == "ok");
  CHECK(fs::exists(out / "run.mu=0" / "metrics.csv"));
  CHECK(fs::exists(out / "run.mu=0.5" / "metrics.csv"));
}

TEST_CASE("cli: a two-axis sweep walks the grid in odometer order") {
  const fs::path dir = fresh_dir("sweep_grid");
  const fs::path config = write_small_config(dir);
  const fs::path out = dir / "sweep";

  CommandResult r = run_cli("sweep --config " + config.string() +
                                " --grid mu=0,0.1 --grid lambda=0,0.2 --out " + out.string(),
                            dir);
  CHECK(r.exit_code == 0);
  auto lines = lines_of(read_file(out / "summary.csv"));
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "run.mu,run.lambda,final_mean_acc,status");
  CHECK(lines[1].rfind("0,0,", 0) == 0);
  CHECK(lines[2].rfind("0.1,0,", 0) == 0);
  CHECK(lines[3].rfind("0,0.2,", 0) == 0);
  CHECK(lines[4].rfind("0.1,0.2,", 0) == 0);
  CHECK(fs::exists(out / "run.mu=0.1_run.lambda=0.2" / "metrics.csv"));
}

TEST_CASE("cli: a sweep point reproduces the equivalent single run") {
  const fs::path dir = fresh_dir("sweep_point");
  const fs::path config = write_small_config(dir);
  const fs::path sweep_out = dir / "sweep";
  const fs::path run_out = dir / "single";

  REQUIRE(run_cli("sweep --config " + config.string() + " --grid mu=0,0.5 --out " +
                      sweep_out.string(),
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("run --config " + config.string() + " --set run.mu=0.5 --out " +
                      run_out.string(),
                  dir)
              .exit_code == 0);
  CHECK(read_file(sweep_out / "run.mu=0.5" / "metrics.csv") ==
        read_file(run_out / "metrics.csv"));
}

TEST_CASE("cli: a broken sweep point is reported, not fatal") {
  const fs::path dir = fresh_dir("sweep_broken");
  const fs::path config = write_small_config(dir);
  const fs::path out = dir / "sweep";

  CommandResult r = run_cli("sweep --config " + config.string() + " --grid eta=0.05,abc --out " +
                                out.string(),
                            dir);
  CHECK(r.exit_code == 0);
  auto lines = lines_of(read_file(out / "summary.csv"));
  REQUIRE(lines.size() == 3);
  CHECK(lines[1].substr(lines[1].rfind(',') + 1) == "ok");
  CHECK(lines[2] == "abc,nan,failed");
}

TEST_CASE("cli: file-backed datasets flow through partitioning") {
  const fs::path dir = fresh_dir("file_source");

  fedac::Dataset pool;
  pool.class_count = 2;
  pool.features = fedac::RealMatrix(60, 3);
  for (int r = 0; r < 60; ++r) {
    for (int c = 0; c < 3; ++c) pool.features.at(r, c) = 0.1 * r + c;
    pool.labels.push_back(r % 2);
  }
  const fs::path data_path = dir / "pool.csv";
  fedac::save_dataset(data_path, pool);

  const fs::path config = dir / "config.json";
  write_file(config, R"({
  "run": {"rounds": 1, "seed": 3, "eta": 0.05, "k_init": 1, "reduction_dim": 2,
          "sample_fraction": 1.0, "local_epochs": 1, "batch_size": 4},
  "model": {"hidden_sizes": [4]},
  "data": {
    "source": "file", "path": ")" + data_path.string() + R"(",
    "partition": {"kind": "dirichlet", "alpha": 10.0, "clients": 4,
                   "size_min": 8, "size_max": 14}
  }
})");

  const fs::path out = dir / "out";
  CommandResult r =
      run_cli("run --config " + config.string() + " --out " + out.string(), dir);
  CHECK(r.exit_code == 0);
  CHECK(lines_of(read_file(out / "metrics.csv")).size() == 2);

  CommandResult report = run_cli("report --dir " + out.string() + " --kind partition", dir);
  CHECK(lines_of(report.out).size() == 5);
}
