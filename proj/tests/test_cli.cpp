#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

// End-to-end checks against the real binary; the build passes its location in
// STORAGE_MARKET_CLI.

namespace {

namespace fs = std::filesystem;

const fs::path& scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "storage-market-cli-tests";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct CliResult {
  int status = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args, const std::string& env = "") {
  const fs::path out_path = scratch_dir() / "stdout.txt";
  const fs::path err_path = scratch_dir() / "stderr.txt";
  std::string cmd = env.empty() ? std::string() : env + " ";
  cmd += "'" STORAGE_MARKET_CLI "' " + args + " >'" + out_path.string() + "' 2>'" +
         err_path.string() + "'";
  const int raw = std::system(cmd.c_str());
  CliResult res;
  res.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  res.out = slurp(out_path);
  res.err = slurp(err_path);
  return res;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("no arguments print the usage text and exit 2") {
  const CliResult res = run_cli("");
  CHECK(res.status == 2);
  CHECK(contains(res.out, "Usage"));
  CHECK(contains(res.out, "solve"));
  CHECK(contains(res.out, "sweep"));
}

TEST_CASE("unknown flags exit 2 with a diagnostic") {
  const CliResult res = run_cli("solve --bogus 3");
  CHECK(res.status == 2);
  CHECK(contains(res.err, "--bogus"));
}

TEST_CASE("range inversions get their own diagnostic") {
  const CliResult inverted = run_cli("solve --price-range 50:10");
  CHECK(inverted.status == 2);
  CHECK(contains(inverted.err, "range inversion in --price-range"));

  const CliResult malformed = run_cli("solve --price-range 50");
  CHECK(malformed.status == 2);
  CHECK(contains(malformed.err, "missing ':'"));
}

TEST_CASE("missing input files are reported") {
  const CliResult res = run_cli("clear --instance /does/not/exist.txt");
  CHECK(res.status == 2);
  CHECK(contains(res.err, "cannot read instance file"));
}

TEST_CASE("solve runs the desk-shaped game and certifies its own answer") {
  const fs::path strategy = scratch_dir() / "ne.strategy";
  const CliResult solved = run_cli(
      "solve --sellers 6 --buyers 5 --w 0.3 --mode seq --seed 42 --strategy-out '" +
      strategy.string() + "'");
  CHECK(solved.status == 0);
  CHECK(contains(solved.out, "schema: storage-market/solve v1"));
  CHECK(contains(solved.out, "mode sequential"));
  CHECK(contains(solved.out, "converged yes"));

  const CliResult verified = run_cli(
      "verify --sellers 6 --buyers 5 --seed 42 --strategy '" + strategy.string() + "'");
  CHECK(verified.status == 0);
  CHECK(contains(verified.out, "nash yes"));

  // Shading one offer upward breaks the certificate.
  std::istringstream lines(slurp(strategy));
  std::string line, bumped;
  bool first_offer = true;
  while (std::getline(lines, line)) {
    if (first_offer && line.rfind("offer ", 0) == 0) {
      const auto last_space = line.rfind(' ');
      const double v = std::strtod(line.substr(last_space + 1).c_str(), nullptr);
      line = line.substr(0, last_space + 1) + std::to_string(v + 25.0);
      first_offer = false;
    }
    bumped += line + "\n";
  }
  const fs::path bad = scratch_dir() / "bumped.strategy";
  spit(bad, bumped);
  const CliResult rejected = run_cli(
      "verify --sellers 6 --buyers 5 --seed 42 --strategy '" + bad.string() + "'");
  CHECK(rejected.status == 1);
  CHECK(contains(rejected.out, "nash no"));
}

TEST_CASE("hitting the iteration cap exits with status 1") {
  const CliResult res = run_cli("solve --seed 42 --max-iter 1");
  CHECK(res.status == 1);
  CHECK(contains(res.out, "converged no"));
}

TEST_CASE("flags override configuration file values") {
  const fs::path cfg = scratch_dir() / "solve.ini";
  spit(cfg, "[solve]\nw=0.5\nseed=42\n");

  const CliResult from_file = run_cli("--config '" + cfg.string() + "' solve");
  CHECK(from_file.status == 0);
  CHECK(contains(from_file.out, "\nw 0.5\n"));

  const CliResult overridden = run_cli("--config '" + cfg.string() + "' solve --w 0.1");
  CHECK(overridden.status == 0);
  CHECK(contains(overridden.out, "\nw 0.1"));
}

TEST_CASE("diagnostics stay on the standard error stream") {
  const CliResult chatty = run_cli("clear --seed 3", "STORAGE_MARKET_LOG=info");
  CHECK(chatty.status == 0);
  CHECK(chatty.out.rfind("schema: storage-market/outcome v1\n", 0) == 0);
  CHECK_FALSE(contains(chatty.out, "[storage-market]"));
  CHECK(contains(chatty.err, "[storage-market]"));
  CHECK(contains(chatty.err, "generating market"));

  const CliResult quiet = run_cli("clear --seed 3", "STORAGE_MARKET_LOG=error");
  CHECK(quiet.status == 0);
  CHECK(quiet.err.empty());
}

TEST_CASE("clear emits the csv table on demand") {
  const CliResult res = run_cli("clear --seed 3 --format csv");
  CHECK(res.status == 0);
  CHECK(res.out.rfind("side,id,reservation,quantity,marginal,price\n", 0) == 0);
}

TEST_CASE("sweep reruns are byte-identical") {
  const fs::path a = scratch_dir() / "sweep_a.csv";
  const fs::path b = scratch_dir() / "sweep_b.csv";
  const std::string flags =
      "sweep --vary n --n-min 4 --n-max 5 --k 3 --runs 2 --algorithms greedy --seed 7 "
      "--out ";
  CHECK(run_cli(flags + "'" + a.string() + "'").status == 0);
  CHECK(run_cli(flags + "'" + b.string() + "'").status == 0);
  const std::string text = slurp(a);
  CHECK(text == slurp(b));
  CHECK(text.rfind("k,n,algorithm,mean_utility,std_utility,runs\n", 0) == 0);
  CHECK(contains(text, "greedy"));
}

TEST_CASE("timesim writes one csv row per player and period") {
  const CliResult res = run_cli("timesim --sellers 2 --buyers 2 --periods 2 --seed 5");
  CHECK(res.status == 0);
  CHECK(res.out.rfind("period,player,role,", 0) == 0);
  std::size_t rows = 0;
  for (char c : res.out) rows += (c == '\n');
  CHECK(rows == 1 + 2 * 4);
}
