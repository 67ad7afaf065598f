// Records the exotic-pets replay fixtures by running the CLI in record mode
// against the synthetic backend.
//
//   popscope-fixtures [--out fixtures/exotic_pets]

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "popscope/cli.hpp"
#include "synthetic/scenario.hpp"
#include "synthetic/synthetic_world.hpp"

namespace fs = std::filesystem;
using namespace popscope;

int main(int argc, char** argv) {
  CLI::App app{"Record the exotic-pets replay fixtures", "popscope-fixtures"};
  std::string out_dir = "fixtures/exotic_pets";
  app.add_option("--out", out_dir, "Fixture directory (replaced)");
  CLI11_PARSE(app, argc, argv);

  const fs::path out = fs::absolute(out_dir);
  const fs::path work = fs::temp_directory_path() / "popscope-fixtures-work";
  fs::remove_all(out);
  fs::remove_all(work);
  fs::create_directories(work);

  auto transport = std::make_shared<synthetic::SyntheticTransport>();
  CliEnvironment env{transport, [] { return synthetic::kRecordedAt(); }};

  // Point every endpoint at the synthetic backend via a config file.
  const fs::path config = work / "config.json";
  {
    nlohmann::json cfg{{"urls", synthetic::SyntheticTransport::urls()}, {"rate_limit_rps", 1000.0}};
    std::ofstream(config) << cfg.dump(2);
  }

  const std::vector<std::string> base{"popscope", "--config", config.string(), "--store",
                                      (work / "store.db").string(), "--fixtures", out.string(),
                                      "--mode", "record", "--json"};
  auto run = [&](std::vector<std::string> args) {
    std::vector<std::string> argv_full = base;
    argv_full.insert(argv_full.end(), args.begin(), args.end());
    std::ostringstream o, e;
    const int code = cli_dispatch(argv_full, o, e, env);
    if (code != 0) {
      std::cerr << "step failed (" << code << "): " << args.front() << "\n" << e.str() << o.str();
      std::exit(1);
    }
    return nlohmann::json::parse(o.str());
  };

  for (const auto& step : synthetic::exotic_pets_steps(work)) {
    auto result = run(step.args);
    if (step.after) step.after(result);
  }
  std::cout << "recorded " << transport->calls() << " requests into " << out << '\n';
  fs::remove_all(work);
  return 0;
}
