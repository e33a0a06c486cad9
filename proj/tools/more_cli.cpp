#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "more/checkpoint.hpp"
#include "more/image_io.hpp"
#include "more/trainer.hpp"
#include "more/verify.hpp"

namespace fs = std::filesystem;
using namespace more;

namespace {

constexpr int kExitBadConfig = 2;
constexpr int kExitNumericAbort = 3;
constexpr int kExitBadCheckpoint = 4;

std::string num(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::string metrics_line(const LossReport& r) {
  std::ostringstream out;
  out << r.step << "," << num(r.l_cls) << "," << num(r.l_mct) << "," << num(r.l_cre)
      << "," << num(r.l_ure) << "," << num(r.l_seg) << "," << num(r.l_total);
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValueError("cannot open " + path.string());
  out << text;
}

void print_eval(const EvalResult& r) {
  std::cout << "== seed (pseudo labels vs ground truth) ==\n" << r.seed.to_csv();
  std::cout << "== mask (decoder predictions vs ground truth) ==\n" << r.mask.to_csv();
  std::cout << "exact_match," << num(r.exact_match) << "\n";
}

Checkpoint snapshot(const Trainer& t) {
  Checkpoint c;
  c.params = t.params();
  c.step = t.step();
  c.seed = t.config().seed;
  c.config_echo = t.config().echo();
  return c;
}

int cmd_train(const std::string& config_path, const std::string& out_override,
              std::int64_t seed_override) {
  RunConfig cfg;
  try {
    cfg = RunConfig::load(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) cfg.out_dir = out_override;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitBadConfig;
  }

  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  write_text(out / "config.txt", cfg.echo());

  Trainer trainer(cfg);
  std::ofstream metrics(out / "metrics.csv", std::ios::trunc);
  metrics << "step,L_cls,L_mct,L_cre,L_ure,L_seg,L_total\n";
  try {
    for (std::size_t s = 0; s < cfg.steps; ++s) {
      const LossReport r = trainer.train_step();
      metrics << metrics_line(r) << "\n";
      if (cfg.checkpoint_every > 0 && r.step % cfg.checkpoint_every == 0) {
        std::ostringstream name;
        name << "checkpoint_" << r.step << ".bin";
        save_checkpoint(snapshot(trainer), (out / name.str()).string());
      }
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumericAbort;
  }
  metrics.close();
  save_checkpoint(snapshot(trainer), (out / "checkpoint_final.bin").string());

  const EvalResult ev = trainer.evaluate(trainer.make_val_split());
  print_eval(ev);
  std::ostringstream val;
  val << "== seed ==\n" << ev.seed.to_csv() << "== mask ==\n" << ev.mask.to_csv()
      << "exact_match," << num(ev.exact_match) << "\n";
  write_text(out / "val_metrics.csv", val.str());
  return 0;
}

// config comes from --config when given, otherwise from the checkpoint echo
int load_run(const std::string& ckpt_path, const std::string& config_path,
             Checkpoint& ckpt, RunConfig& cfg) {
  try {
    ckpt = load_checkpoint(ckpt_path);
  } catch (const std::exception& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitBadCheckpoint;
  }
  try {
    cfg = config_path.empty() ? RunConfig::parse_text(ckpt.config_echo)
                              : RunConfig::load(config_path);
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitBadConfig;
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& config_path) {
  Checkpoint ckpt;
  RunConfig cfg;
  if (int rc = load_run(ckpt_path, config_path, ckpt, cfg)) return rc;
  Trainer trainer(cfg, std::move(ckpt.params));
  print_eval(trainer.evaluate(trainer.make_val_split()));
  return 0;
}

std::vector<double> channel_scores(const ActivationMap& m, std::size_t c) {
  std::vector<double> s(m.n_h * m.n_w);
  for (std::size_t p = 0; p < s.size(); ++p) s[p] = m.scores[p * m.num_classes + c];
  return s;
}

int cmd_dump_maps(const std::string& ckpt_path, const std::string& config_path,
                  const std::string& out_dir, std::uint64_t sample_seed) {
  Checkpoint ckpt;
  RunConfig cfg;
  if (int rc = load_run(ckpt_path, config_path, ckpt, cfg)) return rc;
  Trainer trainer(cfg, std::move(ckpt.params));

  const SyntheticSample sample = generate_sample(sample_seed, cfg.synth());
  const SampleForward f = trainer.forward_sample(sample);
  const std::size_t g = cfg.image_size / cfg.patch_size;

  const fs::path out(out_dir);
  fs::create_directories(out);
  write_image_ppm((out / "image.ppm").string(), sample.image);
  write_label_pgm((out / "gt.pgm").string(), sample.mask, cfg.image_size, cfg.image_size);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    const std::string tag = "_class" + std::to_string(c + 1) + ".pgm";
    write_scores_pgm((out / ("cam" + tag)).string(), channel_scores(f.cam, c), g, g);
    write_scores_pgm((out / ("lam" + tag)).string(), channel_scores(f.lam, c), g, g);
    std::vector<int> nbr(g * g, 0);
    for (std::size_t p : f.gcr_state.neighbors[c]) nbr[p] = 255;
    write_label_pgm((out / ("neighbors" + tag)).string(), nbr, g, g);
  }
  write_label_pgm((out / "mask_ma.pgm").string(), f.mask.labels, g, g);
  write_label_pgm((out / "mask_mc.pgm").string(), f.relations.confident, g, g);
  std::vector<int> unc(g * g, 0);
  for (std::size_t p = 0; p < unc.size(); ++p)
    if (f.relations.uncertain[p]) unc[p] = 255;
  write_label_pgm((out / "mask_mu.pgm").string(), unc, g, g);
  write_label_pgm((out / "pseudo.pgm").string(), f.pseudo, g, g);
  return 0;
}

int cmd_verify(const std::string& config_path, bool inject_fault) {
  if (!config_path.empty()) {
    try {
      RunConfig::load(config_path).validate();
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitBadConfig;
    }
  }
  bool all_ok = true;
  for (const CheckResult& r : run_verification(inject_fault)) {
    std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name;
    if (!r.detail.empty()) std::cout << " (" << r.detail << ")";
    std::cout << "\n";
    all_ok = all_ok && r.passed;
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"training and analysis front-end"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, out_dir;
  std::int64_t seed = -1;
  bool inject_fault = false;

  auto* train = app.add_subcommand("train", "run the training loop");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--out", out_dir, "output directory override");
  train->add_option("--seed", seed, "seed override");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the val split");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--config", config_path, "config file (default: checkpoint echo)");

  auto* dump = app.add_subcommand("dump-maps", "write activation and mask images");
  dump->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  dump->add_option("--config", config_path, "config file (default: checkpoint echo)");
  dump->add_option("--out", out_dir, "output directory")->required();
  dump->add_option("--seed", seed, "sample seed");

  auto* verify = app.add_subcommand("verify", "run the oracle and gradient-check suite");
  verify->add_option("--config", config_path, "config file (validated only)");
  verify->add_flag("--inject-gradient-fault", inject_fault)->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(train)) return cmd_train(config_path, out_dir, seed);
    if (app.got_subcommand(eval)) return cmd_eval(ckpt_path, config_path);
    if (app.got_subcommand(dump))
      return cmd_dump_maps(ckpt_path, config_path, out_dir,
                           seed < 0 ? 0 : static_cast<std::uint64_t>(seed));
    if (app.got_subcommand(verify)) return cmd_verify(config_path, inject_fault);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
