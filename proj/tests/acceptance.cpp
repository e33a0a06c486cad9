// End-to-end acceptance checks. Each criterion prints exactly one
// [PASS]/[FAIL] line; the exit code is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "more/checkpoint.hpp"
#include "more/trainer.hpp"
#include "more/verify.hpp"

using namespace more;
namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int criterion, bool ok, const std::string& detail) {
  std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << criterion << " (" << detail << ")"
            << std::endl;
  if (!ok) ++failures;
}

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

bool all_passed(const std::vector<CheckResult>& rs) {
  for (const CheckResult& r : rs)
    if (!r.passed) return false;
  return !rs.empty();
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

// Mean FP/TP over foreground classes with at least one true positive.
double fg_confusion(const MetricsReport& r) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t c = 1; c < r.per_class.size(); ++c)
    if (r.per_class[c].ratio_defined) {
      sum += r.per_class[c].confusion_ratio;
      ++n;
    }
  return n ? sum / n : std::numeric_limits<double>::infinity();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string metrics_stream(const std::vector<LossReport>& reports) {
  std::ostringstream out;
  out.precision(17);
  for (const LossReport& r : reports)
    out << r.step << "," << r.l_cls << "," << r.l_mct << "," << r.l_cre << "," << r.l_ure << ","
        << r.l_seg << "," << r.l_total << "\n";
  return out.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

int main() {
  std::mt19937_64 rng(611953);

  // 1: analytic gradients against central finite differences.
  {
    const auto t0 = clock_type::now();
    const auto rs = verify_gradients(rng);
    const double secs = seconds_since(t0);
    report(1, all_passed(rs) && secs < 60.0,
           std::to_string(rs.size()) + " gradient checks in " + fmt(secs) + "s");
  }

  // 2: implementations against brute-force oracles.
  {
    const auto t0 = clock_type::now();
    const auto rs = verify_oracles(rng);
    const double secs = seconds_since(t0);
    report(2, all_passed(rs) && secs < 60.0,
           std::to_string(rs.size()) + " oracle checks in " + fmt(secs) + "s");
  }

  // 3: reliability-mask partition and threshold monotonicity.
  {
    const auto rs = verify_threshold_properties(rng);
    report(3, all_passed(rs), "partition and monotonicity over random maps");
  }

  // 4: closed-form loss anchors.
  {
    const auto rs = verify_closed_forms();
    report(4, all_passed(rs), "uniform-logit and zero-logit anchors");
  }

  // 5 + 8: full default run. The same run provides the per-step loss
  // combination identity for criterion 8.
  double identity_err = 0.0;
  {
    const auto t0 = clock_type::now();
    RunConfig cfg;
    cfg.validate();
    Trainer trainer(cfg);
    double total_at_100 = 0.0, total_final = 0.0;
    for (std::size_t s = 1; s <= cfg.steps; ++s) {
      const LossReport r = trainer.train_step();
      const double more = r.l_cls + r.l_mct + cfg.alpha * r.l_cre + cfg.beta * r.l_ure;
      identity_err = std::max(identity_err, std::abs(r.l_more - more));
      if (r.step == 100) total_at_100 = r.l_total;
      total_final = r.l_total;
    }
    const double secs = seconds_since(t0);
    const EvalResult ev = trainer.evaluate(trainer.make_val_split());
    const double ratio = total_final / total_at_100;
    const bool ok = secs < 1800.0 && ev.exact_match >= 0.90 && ev.seed.miou >= 0.50 &&
                    ratio <= 0.50;
    report(5, ok,
           "exact_match=" + fmt(ev.exact_match) + " seed_miou=" + fmt(ev.seed.miou) +
               " loss_ratio=" + fmt(ratio) + " in " + fmt(secs) + "s");
  }

  // 6: ablation directions over three seeds (shortened runs).
  {
    const std::size_t kAblationSteps = 1000;
    auto run = [&](double alpha, double beta, bool use_gcr, std::uint64_t seed,
                   double* confusion) {
      RunConfig cfg;
      cfg.alpha = alpha;
      cfg.beta = beta;
      cfg.use_gcr = use_gcr;
      cfg.seed = seed;
      cfg.steps = kAblationSteps;
      cfg.validate();
      Trainer trainer(cfg);
      for (std::size_t s = 0; s < cfg.steps; ++s) trainer.train_step();
      const EvalResult ev = trainer.evaluate(trainer.make_val_split());
      if (confusion) *confusion = fg_confusion(ev.seed);
      return ev.seed.miou;
    };
    std::vector<double> full, no_cre, no_ure, no_gcr, full_conf, no_cre_conf;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      double cf = 0.0, cn = 0.0;
      const RunConfig defaults;
      full.push_back(run(defaults.alpha, defaults.beta, true, seed, &cf));
      no_cre.push_back(run(0.0, defaults.beta, true, seed, &cn));
      no_ure.push_back(run(defaults.alpha, 0.0, true, seed, nullptr));
      no_gcr.push_back(run(defaults.alpha, defaults.beta, false, seed, nullptr));
      full_conf.push_back(cf);
      no_cre_conf.push_back(cn);
    }
    const double m_full = median3(full);
    const bool ok = m_full >= median3(no_cre) && m_full >= median3(no_ure) &&
                    m_full >= median3(no_gcr) &&
                    median3(full_conf) <= median3(no_cre_conf);
    report(6, ok,
           "median miou full=" + fmt(m_full) + " no_cre=" + fmt(median3(no_cre)) +
               " no_ure=" + fmt(median3(no_ure)) + " no_gcr=" + fmt(median3(no_gcr)) +
               " confusion full=" + fmt(median3(full_conf)) +
               " no_cre=" + fmt(median3(no_cre_conf)));
  }

  // 7: bit-identical repeat of one config.
  {
    RunConfig cfg;
    cfg.embed_dim = 16;
    cfg.depth = 1;
    cfg.num_heads = 2;
    cfg.train_samples = 16;
    cfg.val_samples = 8;
    cfg.batch_size = 4;
    cfg.warmup_steps = 4;
    cfg.steps = 30;
    cfg.validate();
    auto run = [&](const fs::path& ckpt) {
      Trainer trainer(cfg);
      std::vector<LossReport> stream;
      for (std::size_t s = 0; s < cfg.steps; ++s) stream.push_back(trainer.train_step());
      Checkpoint ck;
      ck.step = trainer.step();
      ck.seed = cfg.seed;
      ck.config_echo = cfg.echo();
      ck.params = trainer.params();
      save_checkpoint(ck, ckpt.string());
      return metrics_stream(stream);
    };
    const fs::path dir = fs::temp_directory_path();
    const fs::path c1 = dir / "acceptance_ck1.bin", c2 = dir / "acceptance_ck2.bin";
    const std::string s1 = run(c1), s2 = run(c2);
    const bool ok = s1 == s2 && slurp(c1) == slurp(c2);
    fs::remove(c1);
    fs::remove(c2);
    report(7, ok, "metrics stream and checkpoint bytes identical across reruns");
  }

  // 8: loss combination identity, measured over the criterion-5 run.
  report(8, identity_err <= 1e-9, "max identity deviation " + fmt(identity_err));

  return failures;
}
