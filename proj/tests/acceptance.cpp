// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Usage: cntf_acceptance [fixtures_dir]

#include "support/gradcheck.hpp"
#include "support/metric_oracles.hpp"
#include "support/overfit.hpp"
#include "support/properties.hpp"
#include "support/replay.hpp"
#include "support/scalar_oracles.hpp"
#include "support/triple_oracle.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

namespace {

using namespace cntf;
using namespace cntf::testing;

constexpr double kGradSeconds = 120.0;
constexpr int kDistributionDraws = 100;
constexpr int kSyntheticDialogues = 20;
constexpr double kOverfitLoss = 0.5;
constexpr double kOverfitMatch = 0.9;
constexpr double kOverfitSeconds = 30.0 * 60.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

template <class F>
Outcome timed(F&& f, double& seconds) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o = f();
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return o;
}

Outcome gradients() {
  double seconds = 0.0;
  Outcome o = timed(
      [] {
        Outcome r{true, ""};
        for (const GradCase& c : gradient_suite(3)) {
          const bool ok = c.result.checked > 0 && c.result.max_rel_error < kGradTolerance;
          r.pass = r.pass && ok;
          r.detail += c.name + "=" + fmt("%.2e", c.result.max_rel_error) + (ok ? " " : "(worst " + c.result.worst + ") ");
        }
        return r;
      },
      seconds);
  o.pass = o.pass && seconds < kGradSeconds;
  o.detail += "tol=" + fmt("%.0e", kGradTolerance) + " time=" + fmt("%.1fs", seconds);
  return o;
}

Outcome distributions() {
  const DistributionReport r = distribution_suite(kDistributionDraws, 5);
  return {r.ok() && r.draws >= kDistributionDraws,
          std::to_string(r.draws) + " draws, " + std::to_string(r.vectors) + " vectors, max |sum-1|=" +
              fmt("%.2e", r.max_sum_error) + " min entry=" + fmt("%.2e", r.min_entry) +
              (r.worst.empty() ? "" : " worst=" + r.worst)};
}

Outcome gates() {
  Outcome o{true, ""};
  double worst = 0.0;
  for (const CornerResult& c : gate_corners(9)) {
    const double e = std::max(c.cascade_error, c.step_error);
    worst = std::max(worst, e);
    if (!(e <= kCornerTolerance)) {
      o.pass = false;
      o.detail += "corner(" + std::to_string(c.g1) + std::to_string(c.g2) + std::to_string(c.g3) + ") ";
    }
  }
  o.detail += "8 corners, max error=" + fmt("%.2e", worst) + " tol=" + fmt("%.0e", kCornerTolerance);
  return o;
}

Outcome scalars() {
  const auto comparisons = scalar_scenarios();
  const double err = max_abs_error(comparisons);
  std::string worst;
  for (const auto& c : comparisons) {
    if (!(std::abs(c.actual - c.expected) <= kScalarTolerance)) worst += c.name + " ";
  }
  return {err <= kScalarTolerance,
          std::to_string(comparisons.size()) + " quantities, max error=" + fmt("%.2e", err) + " tol=" +
              fmt("%.0e", kScalarTolerance) + (worst.empty() ? "" : " failing: " + worst)};
}

Outcome triples(const std::filesystem::path& fixtures) {
  const MohicansReport f = mohicans_report(fixtures);
  const SyntheticTripleReport s = synthetic_triple_check(kSyntheticDialogues, 17);
  return {f.ok() && s.ok() && s.dialogues == kSyntheticDialogues,
          std::string("mohicans: director edge ") + (f.has_director_edge ? "yes" : "no") + ", producer edge " +
              (f.has_producer_edge ? "yes" : "no") + ", pairs " + std::to_string(f.entity_pairs) + "=C(" +
              std::to_string(f.entities) + ",2), entity-concept " + std::to_string(f.entity_concepts) + "=" +
              std::to_string(f.entities) + "*" + std::to_string(f.concepts) + "; synthetic: " +
              std::to_string(s.dialogues) + " dialogues, " + std::to_string(s.formula_failures) +
              " formula / " + std::to_string(s.enumeration_failures) + " enumeration failures" +
              (s.first_failure.empty() ? "" : " first " + s.first_failure)};
}

Outcome overfit(const std::filesystem::path& fixtures) {
  const OverfitOutcome a = run_overfit(fixtures);
  const OverfitOutcome b = run_overfit(fixtures);
  const bool deterministic = a.fingerprint == b.fingerprint && a.train_loss == b.train_loss &&
                             a.match.matched == b.match.matched;
  return {a.train_loss < kOverfitLoss && a.match.rate() >= kOverfitMatch && a.seconds < kOverfitSeconds &&
              deterministic,
          "loss=" + fmt("%.4f", a.train_loss) + " nats/token (< 0.5), exact match " +
              std::to_string(a.match.matched) + "/" + std::to_string(a.match.total) + " (>= 90%), time=" +
              fmt("%.1fs", a.seconds) + ", rerun " + (deterministic ? "identical" : "DIFFERS")};
}

Outcome metrics(const std::filesystem::path& fixtures) {
  const auto comparisons = metric_suite(fixtures, 23);
  std::string worst;
  double err = 0.0;
  for (const auto& c : comparisons) {
    const double e = std::abs(c.actual - c.expected);
    if (!(e <= kMetricTolerance)) worst += c.name + " ";
    if (std::isfinite(e)) err = std::max(err, e);
  }
  return {worst.empty(), std::to_string(comparisons.size()) + " checks, max error=" + fmt("%.2e", err) + " tol=" +
                             fmt("%.0e", kMetricTolerance) + (worst.empty() ? "" : " failing: " + worst)};
}

Outcome window() {
  const WindowReport two = window_scenario(2);
  const WindowReport one = window_scenario(1);
  auto describe = [](const WindowReport& r) {
    std::string s = "[" + join(r.bank_tokens) + "]";
    return s + (r.ok() ? "" : " expected [" + join(r.expected_tokens) + "]");
  };
  return {two.ok() && one.ok(), "l=2 bank " + describe(two) + "; l=1 bank " + describe(one)};
}

Outcome replay(const std::filesystem::path& fixtures) {
  OverfitSetup setup = make_overfit_setup(fixtures, 19);
  std::shared_ptr<const CntfModel> model(std::move(setup.model));
  ServiceOptions options;
  options.seed = 42;
  const Transcript first = run_replay_script(model, options);
  const Transcript second = run_replay_script(model, options);
  std::size_t bytes = 0;
  for (const auto& line : first) bytes += line.size();
  const bool same = first == second && !first.empty();
  return {same, std::to_string(first.size()) + " requests, " + std::to_string(bytes) + " bytes, " +
                    (same ? "byte-identical" : "transcripts differ")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path fixtures = argc > 1 ? argv[1] : CNTF_FIXTURES_DIR;
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"gradient_suite", gradients},
      {"distribution_suite", distributions},
      {"gate_algebra", gates},
      {"scalar_oracles", scalars},
      {"triple_construction", [&] { return triples(fixtures); }},
      {"overfit_run", [&] { return overfit(fixtures); }},
      {"metric_suite", [&] { return metrics(fixtures); }},
      {"sliding_window", window},
      {"service_replay", [&] { return replay(fixtures); }},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s  %-20s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}
