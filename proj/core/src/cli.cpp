#include "popscope/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "popscope/error.hpp"
#include "popscope/keywords.hpp"
#include "popscope/probe.hpp"
#include "popscope/projection.hpp"
#include "popscope/service.hpp"

namespace popscope {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot write " + path);
  out << body;
}

std::vector<std::string> keyword_file(const std::string& path) {
  std::vector<std::string> out;
  for (auto& c : read_candidates(read_file(path))) out.push_back(std::move(c.surface));
  if (out.empty()) throw InvalidArgument(path + " lists no keywords");
  return out;
}

std::vector<int> label_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw InvalidArgument("labels: '" + item + "' is not an integer");
    }
  }
  return out;
}

using Action = std::function<json(App&)>;
using Printer = std::function<void(const json&, std::ostream&)>;

void print_pretty(const json& j, std::ostream& out) { out << j.dump(2) << '\n'; }

const CLI::Validator kPositive(
    [](std::string& text) -> std::string {
      try {
        if (std::stod(text) > 0) return {};
      } catch (const std::exception&) {
      }
      return "must be a positive number, got " + text;
    },
    "POSITIVE");

const CLI::Validator kNonNegative(
    [](std::string& text) -> std::string {
      try {
        if (std::stod(text) >= 0) return {};
      } catch (const std::exception&) {
      }
      return "must be a non-negative number, got " + text;
    },
    "NON-NEGATIVE");

struct Generation {
  double temperature = GenerationParams{}.temperature;
  double top_p = GenerationParams{}.top_p;
  int max_tokens = GenerationParams{}.max_tokens;
  std::vector<std::string> stop;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--temperature", temperature, "Sampling temperature");
    cmd->add_option("--top-p", top_p, "Nucleus sampling mass");
    cmd->add_option("--max-tokens", max_tokens, "Tokens per generation");
    cmd->add_option("--stop", stop, "Stop sequence (repeatable)");
  }
  json to_json() const {
    GenerationParams p;
    p.temperature = temperature;
    p.top_p = top_p;
    p.max_tokens = max_tokens;
    p.stop_sequences = stop;
    return json(p);
  }
};

}  // namespace

int cli_dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err,
                 const CliEnvironment& env) {
  CLI::App cli{"Social-media population analysis pipeline", "popscope"};
  cli.require_subcommand(1);
  cli.fallthrough();
  cli.set_version_flag("--version", std::string(kVersion));

  std::optional<std::string> config_file, store_path, fixture_dir, mode;
  std::optional<double> rate_limit;
  bool as_json = false;
  cli.add_option("--config", config_file, "JSON config file");
  cli.add_option("--store", store_path, "Store database path");
  cli.add_option("--fixtures", fixture_dir, "Replay fixture directory");
  cli.add_option("--mode", mode, "Backend mode: live, record or replay");
  cli.add_option("--rate-limit", rate_limit, "Requests per second per endpoint");
  cli.add_flag("--json", as_json, "Machine-readable output");

  Action action;
  Printer printer = print_pretty;
  bool serving = false;
  std::optional<int> serve_port;
  std::string serve_host;
  std::optional<std::string> serve_static;

  // keywords ------------------------------------------------------------------
  auto* kw = cli.add_subcommand("keywords", "Suggest, validate and inspect keywords");
  kw->require_subcommand(1);

  std::string topic, suggest_out;
  int samples = 1;
  Generation suggest_gen;
  auto* suggest = kw->add_subcommand("suggest", "Ask the completion backend for keywords");
  suggest->add_option("--topic", topic, "Prompt stem")->required();
  suggest->add_option("--samples", samples, "Completions to pool")->check(kPositive);
  suggest->add_option("--out", suggest_out, "Write candidates, one per line");
  suggest_gen.add_to(suggest);
  suggest->callback([&] {
    action = [&](App& app) {
      json r = app.suggest({{"topic", topic}, {"samples", samples}, {"params", suggest_gen.to_json()}});
      if (!suggest_out.empty()) {
        write_file(suggest_out, write_candidates(r.at("candidates").get<std::vector<KeywordCandidate>>()));
      }
      return r;
    };
    printer = [](const json& r, std::ostream& o) {
      for (const auto& c : r.at("candidates")) {
        o << c.at("ordinal").get<int>() << ") " << c.at("surface").get<std::string>() << '\n';
      }
    };
  });

  std::string validate_in, validate_report, validate_source = "posts";
  std::optional<std::string> validate_from, validate_to;
  auto* validate = kw->add_subcommand("validate", "Rank candidates by usage counts");
  validate->add_option("--in", validate_in, "Candidates file")->required();
  validate->add_option("--from", validate_from, "First day (YYYY-MM-DD)");
  validate->add_option("--to", validate_to, "Last day (YYYY-MM-DD)");
  validate->add_option("--source", validate_source, "posts or pageviews")
      ->check(CLI::IsMember({"posts", "pageviews"}));
  validate->add_option("--report", validate_report, "Write the report as JSON");
  validate->callback([&] {
    action = [&](App& app) {
      json req{{"candidates", read_candidates(read_file(validate_in))}, {"source", validate_source}};
      if (validate_from || validate_to) {
        if (!validate_from || !validate_to) throw InvalidArgument("--from and --to go together");
        req["start"] = *validate_from;
        req["end"] = *validate_to;
      }
      json r = app.validate(req);
      if (!validate_report.empty()) write_file(validate_report, r.dump(2) + "\n");
      return r;
    };
    printer = [](const json& r, std::ostream& o) {
      for (const auto& rep : r.at("reports")) {
        o << rep.at("candidate").at("surface").get<std::string>() << '\t';
        if (rep.contains("series") && !rep.at("series").is_null()) {
          o << rep.at("series").at("total").get<std::int64_t>();
        } else {
          o << "error: " << rep.value("error", std::string("unavailable"));
        }
        o << '\n';
      }
    };
  });

  std::string ctx_keyword, ctx_from, ctx_to, ctx_base = std::string(kDefaultSearchUrl);
  auto* ctx = kw->add_subcommand("context", "Per-day search URLs for a keyword");
  ctx->add_option("--keyword", ctx_keyword)->required();
  ctx->add_option("--from", ctx_from)->required();
  ctx->add_option("--to", ctx_to)->required();
  ctx->add_option("--base-url", ctx_base);
  ctx->callback([&] {
    action = [&](App& app) {
      return app.context({{"keyword", ctx_keyword}, {"start", ctx_from}, {"end", ctx_to},
                          {"base_url", ctx_base}});
    };
    printer = [](const json& r, std::ostream& o) {
      for (const auto& u : r.at("urls")) {
        o << u.at("day").get<std::string>() << '\t' << u.at("url").get<std::string>() << '\n';
      }
    };
  });

  // collect -------------------------------------------------------------------
  std::string col_keywords, col_from, col_to, col_mode = "uniform", col_lang, col_location, col_stats;
  std::int64_t day_cap = 0, keyword_cap = 0;
  bool no_reposts = false;
  std::uint64_t col_seed = 0;
  auto* collect = cli.add_subcommand("collect", "Sample posts for validated keywords");
  collect->add_option("--keywords", col_keywords, "Keywords file")->required();
  collect->add_option("--from", col_from)->required();
  collect->add_option("--to", col_to)->required();
  collect->add_option("--mode,--sampling", col_mode, "uniform or proportional")
      ->check(CLI::IsMember({"uniform", "proportional"}));
  collect->add_option("--day-cap", day_cap)->required()->check(kPositive);
  collect->add_option("--keyword-cap", keyword_cap)->required()->check(kPositive);
  collect->add_option("--lang", col_lang, "ISO-639-1 language code");
  collect->add_option("--location", col_location, "Country code or min_lat,min_lon,max_lat,max_lon");
  collect->add_flag("--no-reposts", no_reposts);
  collect->add_option("--seed", col_seed);
  collect->add_option("--stats", col_stats, "Write collection stats as JSON");
  collect->callback([&] {
    action = [&](App& app) {
      json r = app.collect({{"keywords", keyword_file(col_keywords)},
                            {"start", col_from},
                            {"end", col_to},
                            {"mode", col_mode},
                            {"day_cap", day_cap},
                            {"keyword_cap", keyword_cap},
                            {"lang", col_lang},
                            {"location", col_location},
                            {"no_reposts", no_reposts},
                            {"seed", col_seed}});
      if (!col_stats.empty()) write_file(col_stats, r.dump(2) + "\n");
      return r;
    };
  });

  // embed / project / cluster / exclude ------------------------------------------
  std::string model_tag = std::string(kDefaultModelTag);
  int batch = kEmbedBatchSize;
  auto* embed = cli.add_subcommand("embed", "Embed stored posts that have no vector yet");
  embed->add_option("--model-tag", model_tag);
  embed->add_option("--batch", batch)->check(kPositive);
  embed->callback([&] {
    action = [&](App& app) { return app.embed({{"model_tag", model_tag}, {"batch_size", batch}}); };
  });

  std::string run_id;
  int pca_k = kDefaultPcaK;
  TsneParams tsne;
  auto* project = cli.add_subcommand("project", "PCA then t-SNE to 2-D");
  project->add_option("--run", run_id)->required();
  project->add_option("--model-tag", model_tag);
  project->add_option("--pca-k", pca_k)->check(kPositive);
  project->add_option("--perplexity", tsne.perplexity)->check(kPositive);
  project->add_option("--iterations", tsne.iterations)->check(kPositive);
  project->add_option("--learning-rate", tsne.learning_rate)->check(kPositive);
  project->add_option("--exaggeration", tsne.early_exaggeration_factor)->check(kPositive);
  project->add_option("--exaggeration-iters", tsne.early_exaggeration_iters)->check(kNonNegative);
  project->add_option("--seed", tsne.seed);
  project->callback([&] {
    action = [&](App& app) {
      return app.project({{"run_id", run_id}, {"model_tag", model_tag}, {"pca_k", pca_k}, {"tsne", tsne}});
    };
  });

  double eps = 0;
  int min_pts = 0;
  auto* cluster = cli.add_subcommand("cluster", "DBSCAN over a projection");
  cluster->add_option("--run", run_id)->required();
  cluster->add_option("--eps", eps, "Neighbourhood radius")->required()->check(kPositive);
  cluster->add_option("--min-pts", min_pts, "Core point threshold")->required()->check(kPositive);
  cluster->callback([&] {
    action = [&](App& app) { return app.cluster({{"run_id", run_id}, {"eps", eps}, {"min_pts", min_pts}}); };
  });

  std::string labels_text;
  bool include_back = false;
  auto* exclude = cli.add_subcommand("exclude", "Mark clusters excluded from the corpus");
  exclude->add_option("--run", run_id)->required();
  exclude->add_option("--labels,--clusters", labels_text, "Comma-separated cluster labels")->required();
  exclude->add_flag("--include,--undo", include_back, "Clear the exclusion instead");
  exclude->callback([&] {
    action = [&](App& app) {
      return app.exclude({{"run_id", run_id}, {"labels", label_list(labels_text)}, {"excluded", !include_back}});
    };
  });

  // corpus --------------------------------------------------------------------
  auto* corpus = cli.add_subcommand("corpus", "Fine-tuning corpus");
  corpus->require_subcommand(1);
  std::string corpus_out;
  std::uint64_t corpus_seed = 0;
  double train_fraction = 0.8;
  bool no_location = false, drop_noise = false;
  auto* build = corpus->add_subcommand("build", "Write train/test splits and a manifest");
  build->add_option("--run", run_id)->required();
  build->add_option("--out", corpus_out, "Output directory")->required();
  build->add_option("--seed", corpus_seed);
  build->add_option("--train-fraction,--train-frac", train_fraction);
  build->add_flag("--no-location", no_location);
  build->add_flag("--drop-noise", drop_noise, "Leave DBSCAN noise points out");
  build->callback([&] {
    action = [&](App& app) {
      return app.corpus_build({{"run_id", run_id},
                               {"output_dir", corpus_out},
                               {"seed", corpus_seed},
                               {"train_fraction", train_fraction},
                               {"include_location", !no_location},
                               {"include_noise", !drop_noise}});
    };
    printer = [](const json& r, std::ostream& o) {
      o << "train " << r.at("counts").at("train") << " lines -> " << r.at("train_path").get<std::string>()
        << "\ntest  " << r.at("counts").at("test") << " lines -> " << r.at("test_path").get<std::string>()
        << "\nspec  " << r.at("spec_hash").get<std::string>() << '\n';
    };
  });

  // probe ---------------------------------------------------------------------
  auto* probe = cli.add_subcommand("probe", "Probe a fine-tuned model");
  probe->require_subcommand(1);
  std::string probes_text;
  int probe_samples = kDefaultSamplesPerProbe;
  Generation probe_gen;
  auto* prun = probe->add_subcommand("run", "Generate and store continuations");
  prun->add_option("--probes", probes_text, "Comma-separated probes")->required();
  prun->add_option("--samples", probe_samples, "Generations per probe")->check(kPositive);
  probe_gen.add_to(prun);
  prun->callback([&] {
    action = [&](App& app) {
      return app.probe_run({{"probes", probes_text},
                            {"samples_per_probe", probe_samples},
                            {"params", probe_gen.to_json()}});
    };
    printer = [](const json& r, std::ostream& o) {
      o << r.at("probe_run_id").get<std::string>() << ": " << r.at("rows") << " rows, "
        << r.at("parsed") << " parsed, " << r.at("backend_failures") << " failed requests\n";
    };
  });

  double threshold = kDefaultDeviationThreshold;
  std::string report_out;
  auto* preport = probe->add_subcommand("report", "Sentinel deviation check");
  preport->add_option("--run", run_id)->required();
  preport->add_option("--threshold", threshold)->check(kNonNegative);
  preport->add_option("--out", report_out, "Write the report as JSON");
  preport->callback([&] {
    action = [&](App& app) {
      json r = app.probe_report(run_id, threshold);
      if (!report_out.empty()) write_file(report_out, r.dump(2) + "\n");
      return r;
    };
    printer = [](const json& r, std::ostream& o) {
      o << "tag      expected  observed  deviation\n";
      for (auto t : kAllProbTags) {
        const auto& d = r.at("per_tag").at(std::string(to_string(t)));
        char line[96];
        std::snprintf(line, sizeof line, "%-8s %8.2f  %8.2f  %+9.2f\n", std::string(to_string(t)).c_str(),
                      d.at("expected_pct").get<double>(), d.at("observed_pct").get<double>(),
                      d.at("deviation_pct").get<double>());
        o << line;
      }
      o << "max deviation " << r.at("max_abs_deviation_pct").get<double>() << " (threshold "
        << r.at("threshold_pct").get<double>() << "): " << (r.at("passed").get<bool>() ? "PASS" : "FAIL")
        << (r.at("unreliable").get<bool>() ? ", unreliable" : "") << '\n';
    };
  });

  // store ---------------------------------------------------------------------
  auto* store_cmd = cli.add_subcommand("store", "Snapshot the store");
  store_cmd->require_subcommand(1);
  std::string snapshot_path;
  auto* sexport = store_cmd->add_subcommand("export", "Write a JSON snapshot");
  sexport->add_option("--out", snapshot_path)->required();
  sexport->callback([&] {
    action = [&](App& app) {
      app.store().export_snapshot(snapshot_path);
      return json{{"path", snapshot_path}, {"tables", app.store().table_row_counts()}};
    };
  });
  auto* simport = store_cmd->add_subcommand("import", "Load a snapshot into an empty store");
  simport->add_option("--in", snapshot_path)->required();
  simport->callback([&] {
    action = [&](App& app) {
      app.store().import_snapshot(snapshot_path);
      return json{{"path", snapshot_path}, {"tables", app.store().table_row_counts()}};
    };
  });

  // serve ---------------------------------------------------------------------
  auto* serve = cli.add_subcommand("serve", "Run the local HTTP API");
  serve->add_option("--port", serve_port)->check(CLI::Range(1024, 65535));
  serve->add_option("--host", serve_host);
  serve->add_option("--static", serve_static, "Directory of web UI assets");
  serve->callback([&] { serving = true; });

  std::vector<const char*> raw;
  raw.reserve(argv.size());
  for (const auto& a : argv) raw.push_back(a.c_str());
  try {
    cli.parse(static_cast<int>(raw.size()), raw.data());
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    AppConfig cfg = AppConfig::load(config_file);
    if (store_path) cfg.store_path = *store_path;
    if (fixture_dir) cfg.backend.fixture_dir = *fixture_dir;
    if (mode) cfg.backend.mode = parse_backend_mode(*mode);
    if (rate_limit) cfg.backend.rate_limit_rps = *rate_limit;
    if (serve_port) cfg.ui_port = *serve_port;
    if (!serve_host.empty()) cfg.bind_host = serve_host;
    if (serve_static) cfg.static_dir = *serve_static;

    App app(cfg, env.transport, env.clock);
    if (serving) {
      Service service(app);
      const int port = service.bind(cfg.bind_host, cfg.ui_port);
      err << "popscope " << kVersion << " listening on http://" << cfg.bind_host << ':' << port << '\n';
      service.listen();
      return kExitOk;
    }
    const json result = action(app);
    if (as_json) {
      out << result.dump() << '\n';
    } else {
      printer(result, out);
    }
    return kExitOk;
  } catch (const InvalidArgument& e) {
    if (as_json) out << json{{"error", error_body(e)}}.dump() << '\n';
    err << "popscope: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    if (as_json) out << json{{"error", error_body(e)}}.dump() << '\n';
    err << "popscope: " << e.what() << '\n';
    return kExitDomainError;
  }
}

}  // namespace popscope
