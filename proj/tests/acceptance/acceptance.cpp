// Acceptance checks for the pipeline, one line per criterion. Everything runs
// offline against the shipped replay fixtures or in-process mocks.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "popscope/analytics.hpp"
#include "popscope/cli.hpp"
#include "popscope/collector.hpp"
#include "popscope/corpus.hpp"
#include "popscope/error.hpp"
#include "popscope/keywords.hpp"
#include "popscope/probe.hpp"
#include "popscope/store.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"
#include "synthetic/scenario.hpp"
#include "synthetic/synthetic_world.hpp"

using namespace popscope;
using namespace popscope::testing;
using nlohmann::json;

namespace {

// A check returns an empty string on success, otherwise the first failure.
using Check = std::function<std::string()>;

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  Check check;
};

#define REQUIRE(cond, msg)                 \
  do {                                     \
    if (!(cond)) {                         \
      std::ostringstream os_;              \
      os_ << msg;                          \
      return os_.str();                    \
    }                                      \
  } while (0)

Matrix gaussian(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = g(rng);
  return x;
}

std::string keyword_golden() {
  std::ifstream in(test_data("keyword_golden.json"));
  const json cases = json::parse(in);
  REQUIRE(cases.size() == 20, "expected 20 golden cases, got " << cases.size());
  std::size_t expected_total = 0, found = 0;
  for (const auto& c : cases) {
    const auto expected = c["expected"].get<std::vector<std::string>>();
    const auto parsed = parse_numbered_list(c["completion"].get<std::string>());
    expected_total += expected.size();
    std::set<std::string> seen;
    for (std::size_t i = 0; i < parsed.candidates.size(); ++i) {
      const auto& k = parsed.candidates[i];
      REQUIRE(is_clean_surface(k.surface), c["name"] << ": unclean surface '" << k.surface << "'");
      REQUIRE(k.ordinal >= 1 && (i == 0 || k.ordinal > parsed.candidates[i - 1].ordinal),
              c["name"] << ": ordinal out of order at " << k.surface);
      std::string lower = k.surface;
      for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      REQUIRE(seen.insert(lower).second, c["name"] << ": duplicate " << k.surface);
      if (i < expected.size() && expected[i] == k.surface) ++found;
    }
    REQUIRE(parsed.candidates.size() == expected.size(),
            c["name"] << ": " << parsed.candidates.size() << " keywords, expected " << expected.size());
  }
  REQUIRE(found == expected_total, found << "/" << expected_total << " keywords extracted");
  return {};
}

std::string validation_totals() {
  BackendClient client(replay_config(shipped_fixtures()), std::make_shared<PanicTransport>());
  PostCountSource counts(client);
  const std::vector<std::string> names{"Bats",       "Monkeys",   "Snakes",       "Alligators",
                                       "Hedgehogs",  "Sloths",    "Chinchillas",  "Axolotls",
                                       "Tarantulas", "Scorpions", "Sugar Gliders"};
  std::vector<KeywordCandidate> cands;
  for (std::size_t i = 0; i < names.size(); ++i) cands.push_back({names[i], static_cast<int>(i) + 1, ""});
  const auto reports = validate_keywords(cands, parse_date("2022-12-17"), parse_date("2022-12-27"), counts);
  const std::vector<std::int64_t> expected{36772, 29830, 21156, 3258, 689, 196};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    REQUIRE(reports.at(i).series, "report " << i << " has no series");
    REQUIRE(reports[i].series->total == expected[i],
            "report " << i << " total " << reports[i].series->total << " != " << expected[i]);
  }
  return {};
}

std::string sampling_properties() {
  const Date d1 = parse_date("2022-12-20"), d2 = parse_date("2022-12-21");
  auto hand = plan_allocation({{"A", {{d1, 60}, {d2, 60}}}}, {SamplingMode::Uniform, 50, 80});
  const auto first = hand[{"A", d1}], second = hand[{"A", d2}];
  REQUIRE(first == 50 && second == 30, "prefix clipping case gave " << first << "/" << second);

  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const int nk = 1 + static_cast<int>(rng() % 6);
    const int nd = 1 + static_cast<int>(rng() % 14);
    std::map<std::string, DailyCounts> counts;
    std::int64_t m = 0;
    for (int k = 0; k < nk; ++k) {
      auto& days = counts["k" + std::to_string(k)];
      for (int d = 0; d < nd; ++d) {
        const std::int64_t n = rng() % 5 == 0 ? 0 : static_cast<std::int64_t>(rng() % 10000);
        m = std::max(m, n);
        days.emplace_back(d1 + std::chrono::days{d}, n);
      }
    }
    const auto mode = rng() % 2 ? SamplingMode::Uniform : SamplingMode::Proportional;
    const std::int64_t cap = 1 + static_cast<std::int64_t>(rng() % 300);
    const std::int64_t overall = cap + static_cast<std::int64_t>(rng() % 3000);
    const auto plan = plan_allocation(counts, {mode, cap, overall});
    for (const auto& [k, days] : counts) {
      std::int64_t sum = 0;
      for (const auto& [d, n] : days) {
        const auto a = plan.at({k, d});
        REQUIRE(a >= 0 && a <= cap && a <= n, "trial " << trial << ": cell " << k << " has " << a);
        // The argmax cell gets the full cap unless the keyword budget already ran out.
        if (mode == SamplingMode::Proportional && n == m && m > 0 && sum + std::min(cap, m) <= overall) {
          REQUIRE(a == std::min(cap, m), "trial " << trial << ": argmax cell got " << a);
        }
        sum += a;
      }
      REQUIRE(sum <= overall, "trial " << trial << ": keyword " << k << " total " << sum);
    }
  }
  return {};
}

std::string pca_invariants() {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + static_cast<int>(rng() % 60);
    const int d = 2 + static_cast<int>(rng() % 30);
    Matrix x = gaussian(n, d, rng());
    const int k = std::min(n, d);
    const auto model = pca_fit(x, k);
    const Matrix gram = model.components * model.components.transpose();
    const int r = static_cast<int>(model.components.rows());
    const double ortho = (gram - Matrix::Identity(r, r)).cwiseAbs().maxCoeff();
    REQUIRE(ortho <= 1e-8, "trial " << trial << ": orthonormality error " << ortho);
    for (int i = 1; i < model.explained_variance.size(); ++i) {
      REQUIRE(model.explained_variance(i) <= model.explained_variance(i - 1) + 1e-12,
              "trial " << trial << ": variance order broken at " << i);
    }
    if (r == d) {
      const Matrix back = (pca_transform(model, x) * model.components).rowwise() + model.mean.transpose();
      const double err = (back - x).cwiseAbs().maxCoeff();
      REQUIRE(err <= 1e-6, "trial " << trial << ": reconstruction error " << err);
    }
  }
  return {};
}

std::string tsne_checks() {
  // Perplexity calibration.
  {
    const Matrix y = gaussian(500, 20, 5);
    const auto aff = tsne::conditional_affinities(y, 30.0);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      double h = 0;
      for (Eigen::Index j = 0; j < y.rows(); ++j)
        if (aff.p(i, j) > 0) h -= aff.p(i, j) * std::log2(aff.p(i, j));
      REQUIRE(std::abs(std::exp2(h) - 30.0) <= 1e-4, "point " << i << " perplexity " << std::exp2(h));
    }
  }
  // Gradient against central differences.
  {
    const Matrix y = gaussian(50, 8, 6);
    const Matrix p = tsne::joint_affinities(tsne::conditional_affinities(y, 10.0).p);
    const Matrix z = gaussian(50, 2, 7);
    const Matrix analytic = tsne::kl_gradient(p, z);
    Matrix numeric(50, 2);
    const double h = 1e-5;
    for (int i = 0; i < 50; ++i) {
      for (int c = 0; c < 2; ++c) {
        Matrix zp = z, zm = z;
        zp(i, c) += h;
        zm(i, c) -= h;
        numeric(i, c) = (tsne::kl_divergence(p, zp) - tsne::kl_divergence(p, zm)) / (2 * h);
      }
    }
    const double rel = (analytic - numeric).norm() / numeric.norm();
    REQUIRE(rel < 1e-4, "gradient relative error " << rel);
  }
  // Three blobs through PCA, t-SNE and DBSCAN.
  {
    const auto blobs = gaussian_blobs(3, 500, 64, 10.0, 2023);
    const auto model = pca_fit(blobs.points, 50);
    TsneParams params;
    params.seed = 42;
    const Matrix z = tsne_project(pca_transform(model, blobs.points), params);
    // eps scales with the layout, which t-SNE does not fix in absolute units.
    const double span = (z.colwise().maxCoeff() - z.colwise().minCoeff()).maxCoeff();
    const auto clusters = dbscan(z, {span / 20.0, 10});
    const double purity = cluster_purity(clusters.labels, blobs.truth);
    REQUIRE(clusters.n_clusters == 3, clusters.n_clusters << " clusters (span " << span << ")");
    REQUIRE(purity >= 0.95, "purity " << purity);
  }
  return {};
}

std::string dbscan_oracle() {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 200);
    Matrix m(n, 2);
    for (int i = 0; i < n; ++i) m(i, 0) = u(rng), m(i, 1) = u(rng);
    const double eps = 0.02 + 0.2 * u(rng);
    const int min_pts = 1 + static_cast<int>(rng() % 8);
    const auto got = canonical_labels(dbscan(m, {eps, min_pts}).labels);
    REQUIRE(got == brute_force_dbscan(m, eps, min_pts),
            "trial " << trial << " (n=" << n << ", eps=" << eps << ", min_pts=" << min_pts << ")");
  }
  return {};
}

std::string meta_round_trip() {
  MetaRecord example;
  example.text =
      "I know I'm not the prettiest dog but my love for you is unconditional always because I have a "
      "beautiful heart and soul ";
  example.created = *try_parse_timestamp("2022-12-27 07:10:25");
  example.location = "USA";
  example.prob = ProbTag::Twenty;
  const std::string expected =
      "[[text: I know I'm not the prettiest dog but my love for you is unconditional always because I "
      "have a beautiful heart and soul  || created: 2022-12-27 07:10:25 || location: USA || "
      "probability: twenty]]";
  REQUIRE(render(example) == expected, "example line renders as " << render(example));

  std::mt19937_64 rng(31);
  for (int i = 0; i < 10000; ++i) {
    const auto r = random_meta_record(rng);
    const auto line = render(r);
    MetaRecord back;
    try {
      back = parse_meta_record(line);
    } catch (const MetaParseError& e) {
      return "record " + std::to_string(i) + " failed to parse: " + e.what();
    }
    REQUIRE(back == r, "record " << i << " changed in round trip: " << line);
  }
  return {};
}

std::string sentinel_distribution() {
  const auto tags = assign_prob_tags(10000, 2022);
  std::array<std::size_t, 4> observed{};
  for (auto t : tags) ++observed[index_of(t)];
  const double stat = chi_square(observed, {0.1, 0.2, 0.3, 0.4});
  REQUIRE(stat < 16.27, "chi-square " << stat << " for " << observed[0] << "/" << observed[1] << "/"
                                      << observed[2] << "/" << observed[3]);
  return {};
}

DeviationReport mock_probe(std::array<int, 4> cycle, int samples) {
  synthetic::WorldOptions w;
  w.probe_tag_cycle = cycle;
  BackendConfig c;
  c.mode = BackendMode::Live;
  c.urls = synthetic::SyntheticTransport::urls();
  c.rate_limit_rps = 1e6;
  BackendClient client(c, std::make_shared<synthetic::SyntheticTransport>(w));
  CompletionClient completion(client);
  auto store = Store::open(":memory:");
  ProbeSpec spec;
  spec.probes = ProbeSpec::split_probes("Ivermectin, Paxlovid");
  spec.samples_per_probe = samples;
  const auto run = run_probes(store, completion, spec, synthetic::kRecordedAt());
  return sanity_check(store, run.probe_run_id, 5.0);
}

std::string probe_sanity() {
  const auto calibrated = mock_probe({7, 8, 15, 20}, 50);
  REQUIRE(calibrated.max_abs_deviation_pct == 4.0, "calibrated mock deviation " << calibrated.max_abs_deviation_pct);
  REQUIRE(calibrated.passed, "calibrated mock did not pass");
  const auto uniform = mock_probe({1, 1, 1, 1}, 100);
  REQUIRE(uniform.max_abs_deviation_pct == 15.0, "uniform mock deviation " << uniform.max_abs_deviation_pct);
  REQUIRE(!uniform.passed, "uniform mock passed");
  return {};
}

// The whole exotic-pets walk through the CLI in a fresh directory; returns the manifest.
json end_to_end_once(std::string& failure) {
  TempDir dir;
  CliEnvironment env{std::make_shared<PanicTransport>(), synthetic::kRecordedAt};
  auto run = [&](std::vector<std::string> args) -> std::optional<json> {
    std::vector<std::string> argv{"popscope", "--store", (dir / "s.db").string(), "--fixtures",
                                  shipped_fixtures().string(), "--mode", "replay", "--json"};
    argv.insert(argv.end(), args.begin(), args.end());
    std::ostringstream out, err;
    if (cli_dispatch(argv, out, err, env) != 0) {
      failure = args.front() + " failed: " + err.str();
      return std::nullopt;
    }
    return json::parse(out.str());
  };
  for (const auto& step : synthetic::exotic_pets_steps(dir.path())) {
    auto r = run(step.args);
    if (!r) return {};
    if (step.after) step.after(*r);
  }
  const std::vector<std::vector<std::string>> rest{
      {"project", "--run", "r", "--seed", "2"},
      {"cluster", "--run", "r", "--eps", "3", "--min-pts", "5"},
      {"exclude", "--run", "r", "--labels", "1"},
      {"corpus", "build", "--run", "r", "--out", (dir / "corpus").string(), "--seed", "5"},
      {"probe", "report", "--run", "probe-1"},
  };
  json manifest, report;
  for (const auto& args : rest) {
    auto r = run(args);
    if (!r) return {};
    if (args.front() == "corpus") manifest = *r;
    if (args.front() == "probe") report = *r;
  }
  if (!report.value("passed", false)) {
    failure = "probe report did not pass: " + report.dump();
    return {};
  }
  return manifest;
}

std::string end_to_end() {
  std::string failure;
  const json a = end_to_end_once(failure);
  REQUIRE(failure.empty(), "first run: " << failure);
  const json b = end_to_end_once(failure);
  REQUIRE(failure.empty(), "second run: " << failure);
  REQUIRE(a["counts"]["candidates"].get<int>() > 0, "empty corpus");
  REQUIRE(a["spec_hash"] == b["spec_hash"], "spec_hash differs across runs");
  REQUIRE(a["files"] == b["files"], "corpus file hashes differ: " << a["files"] << " vs " << b["files"]);
  return {};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "keyword parsing golden set", 1, keyword_golden},
      {2, "validation totals from fixture", 5, validation_totals},
      {3, "sampling allocation properties", 5, sampling_properties},
      {4, "PCA invariants", 10, pca_invariants},
      {5, "t-SNE calibration, gradient, blob recovery", 60, tsne_checks},
      {6, "DBSCAN brute-force equivalence", 10, dbscan_oracle},
      {7, "meta-wrap round trip", 5, meta_round_trip},
      {8, "sentinel tag distribution", 5, sentinel_distribution},
      {9, "probe deviation report", 5, probe_sanity},
      {10, "end-to-end replay via CLI", 120, end_to_end},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string why;
    try {
      why = c.check();
    } catch (const std::exception& e) {
      why = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (why.empty() && secs > c.budget_s) {
      std::ostringstream os;
      os << "took " << secs << "s, budget " << c.budget_s << "s";
      why = os.str();
    }
    std::printf("[%s] %2d %-45s %8.3fs%s%s\n", why.empty() ? "PASS" : "FAIL", c.id, c.name.c_str(), secs,
                why.empty() ? "" : "  ", why.c_str());
    std::fflush(stdout);
    if (!why.empty()) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
