#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "mnar/cli.hpp"
#include "mnar/error.hpp"
#include "mnar/simlab.hpp"

using namespace mnar;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mnar_cli_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_dataset(const std::string& name, const Dataset& d) {
  const auto p = scratch(name);
  std::ofstream out(p);
  emit_csv(out, d);
  return p;
}

std::vector<std::string> fit_args(const fs::path& data) {
  return {"fit", "--data", data.string(), "--treatment", "a", "--outcome", "y", "--confounders", "c1,c2", "--missing", "c1"};
}

}  // namespace

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(ErrorCode::SchemaMismatch) == kExitData);
  CHECK(exit_code_for(ErrorCode::NoConvergence) == kExitConvergence);
  CHECK(exit_code_for(ErrorCode::MissingnessDegenerate) == kExitConvergence);
  CHECK(exit_code_for(ErrorCode::ExtremeWeight) == kExitPositivity);
  CHECK(exit_code_for(ErrorCode::Separation) == kExitPositivity);
  CHECK(exit_code_for(ErrorCode::InvalidSpec) == kExitUsage);
}

TEST_CASE("usage errors") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  const auto missing_treatment = run({"fit", "--data", "x.csv", "--outcome", "y"});
  CHECK(missing_treatment.code == kExitUsage);
  CHECK(missing_treatment.err.find("code=Usage") != std::string::npos);
  CHECK(run({"simulate", "--scenario", "nope"}).code == kExitUsage);
  CHECK(run({"simulate", "--scenario", "ocpc", "--n", "10"}).code == kExitUsage);
  CHECK(run({"simulate", "--scenario", "ocpc", "--format", "xml"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("data errors") {
  const auto r = run({"fit", "--data", scratch("does-not-exist.csv").string(), "--treatment", "a", "--outcome", "y",
                      "--confounders", "c1,c2", "--missing", "c1"});
  CHECK(r.code == kExitData);
  const auto p = scratch("bad.csv");
  std::ofstream(p) << "a,y,c1,c2\n1,2,zz,1\n";
  CHECK(run(fit_args(p)).code == kExitData);
  auto wrong_col = fit_args(p);
  wrong_col[wrong_col.size() - 1] = "c9";
  CHECK(run(wrong_col).code == kExitData);
}

TEST_CASE("fit on data without missingness reports the degenerate missingness model") {
  const auto p = write_dataset("complete.csv", testing::random_dataset(3, 200, 2, 0.0));
  const auto r = run(fit_args(p));
  CHECK(r.code == kExitConvergence);
  CHECK(r.err.find("code=MissingnessDegenerate") != std::string::npos);
}

TEST_CASE("fit writes estimates and is reproducible") {
  const auto g = generate_table2(Scenario::Ocpc, 20000, 4);
  const auto p = write_dataset("ocpc.csv", g.data);
  const auto out1 = scratch("fit1.csv"), out2 = scratch("fit2.csv");
  auto args = fit_args(p);
  args.insert(args.end(), {"--estimators", "wee-or,wee-dr,cc-or", "--out", out1.string()});
  const auto r1 = run(args);
  REQUIRE(r1.code == kExitOk);
  args.back() = out2.string();
  const auto r2 = run(args);
  REQUIRE(r2.code == kExitOk);
  CHECK(r1.out == r2.out);
  const auto csv = slurp(out1);
  CHECK(csv == slurp(out2));
  CHECK(csv.rfind("section,method,name,estimate,se,ci_lo,ci_hi,boot_se,boot_ci_lo,boot_ci_hi\n", 0) == 0);
  CHECK(csv.find("\nate,wee-dr,tau,") != std::string::npos);
  CHECK(csv.find("\nate,cc-or,tau,") != std::string::npos);
  CHECK(csv.find("\nate,mi-or,") == std::string::npos);
  CHECK(csv.find("\ncoefficient,wee,alpha:") != std::string::npos);

  args.back() = scratch("fit.json").string();
  args.insert(args.end(), {"--format", "json"});
  REQUIRE(run(args).code == kExitOk);
  CHECK(slurp(scratch("fit.json")).front() == '{');
}

TEST_CASE("config file supplies defaults and flags override it") {
  const auto cfg = scratch("sim.ini");
  std::ofstream(cfg) << "scenario=ocpc\nn=400\nreps=2\nseed=3\nestimators=cc-or\n";
  const auto a = run({"simulate", "--config", cfg.string()});
  const auto b = run({"simulate", "--scenario", "ocpc", "--n", "400", "--reps", "2", "--seed", "3", "--estimators", "cc-or"});
  REQUIRE(a.code == kExitOk);
  CHECK(a.out == b.out);
  const auto c = run({"simulate", "--config", cfg.string(), "--seed", "4"});
  const auto d = run({"simulate", "--scenario", "ocpc", "--n", "400", "--reps", "2", "--seed", "4", "--estimators", "cc-or"});
  CHECK(c.out == d.out);
  CHECK_FALSE(c.out == a.out);
}

TEST_CASE("seed from the environment") {
  ::setenv("MNAR_SEED", "3", 1);
  const auto env = run({"simulate", "--scenario", "ocpc", "--n", "400", "--reps", "2", "--estimators", "cc-or"});
  ::unsetenv("MNAR_SEED");
  const auto flag = run({"simulate", "--scenario", "ocpc", "--n", "400", "--reps", "2", "--seed", "3", "--estimators", "cc-or"});
  CHECK(env.out == flag.out);
}

TEST_CASE("simulate writes metrics and raw estimates") {
  const auto out = scratch("sim.csv");
  const auto r = run({"simulate", "--scenario", "table1-binary", "--n", "500", "--reps", "10", "--seed", "1",
                      "--estimators", "wee,cc", "--out", out.string()});
  REQUIRE(r.code == kExitOk);
  const auto metrics = slurp(out);
  CHECK(metrics.rfind("scenario,method,target,metric,value\n", 0) == 0);
  CHECK(metrics.find("table1-binary,wee,beta1,bias,") != std::string::npos);
  const auto raw = slurp(scratch("sim.raw.csv"));
  CHECK(raw.rfind("scenario,method,replication,estimate\n", 0) == 0);
  CHECK(raw.find("table1-binary,cc:gamma0,0,") != std::string::npos);
  const auto again = run({"simulate", "--scenario", "table1-binary", "--n", "500", "--reps", "10", "--seed", "1",
                          "--estimators", "wee,cc", "--out", out.string()});
  CHECK(slurp(out) == metrics);
  CHECK(again.out == r.out);

  const auto json = scratch("sim.json");
  REQUIRE(run({"simulate", "--scenario", "ocpc", "--n", "300", "--reps", "2", "--estimators", "cc-or", "--format",
               "json", "--out", json.string()})
              .code == kExitOk);
  CHECK(report_from_json(slurp(json)).replications == 2);
}

TEST_CASE("example1-check") {
  const auto ok = run({"example1-check"});
  CHECK(ok.code == kExitOk);
  CHECK(ok.out.find("points=100") != std::string::npos);
  CHECK(run({"example1-check", "--alpha1-prime", "1.9"}).code == kExitNotEquivalent);
  CHECK(run({"example1-check", "--phi", "0"}).code == kExitUsage);
}
