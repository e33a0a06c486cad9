#include "more/trainer.hpp"

#include <cmath>

#include "more/encoder.hpp"
#include "more/errors.hpp"

namespace more {

std::vector<int> upsample_nearest(const std::vector<int>& grid, std::size_t n_h,
                                  std::size_t n_w, std::size_t factor) {
  if (grid.size() != n_h * n_w) throw ShapeError("upsample_nearest: grid size mismatch");
  std::vector<int> out(n_h * factor * n_w * factor);
  for (std::size_t y = 0; y < n_h * factor; ++y)
    for (std::size_t x = 0; x < n_w * factor; ++x)
      out[y * n_w * factor + x] = grid[(y / factor) * n_w + (x / factor)];
  return out;
}

namespace {

SyntheticSample flip_horizontal(const SyntheticSample& s, std::size_t img) {
  SyntheticSample out = s;
  const std::size_t hw = img * img;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < img; ++y)
      for (std::size_t x = 0; x < img; ++x)
        out.image[c * hw + y * img + x] = s.image[c * hw + y * img + (img - 1 - x)];
  for (std::size_t y = 0; y < img; ++y)
    for (std::size_t x = 0; x < img; ++x)
      out.mask[y * img + x] = s.mask[y * img + (img - 1 - x)];
  return out;
}

struct SampleLosses {
  Var cls, mct, cre, ure, seg;
};

SampleLosses forward_one(Tape& tape, const ParamVars& pv, const RunConfig& cfg,
                         const SyntheticSample& sample, bool lir_active) {
  const EncoderConfig enc_cfg = cfg.encoder();
  Var image = tape.constant(sample.image);
  TokenBundle tokens = encode(image, enc_cfg, pv);
  Var q = cfg.use_gcr
      ? gcr_forward(tokens.class_tokens, tokens.patch_tokens, pv, cfg.effective_k()).q
      : tokens.class_tokens;

  Var cls_logits = classification_logits(tokens.patch_tokens, pv);
  SampleLosses out;
  out.cls = cls_loss(cls_logits, sample.labels);
  out.mct = mct_loss(q);

  // CAM-derived maps are constants of the step: no gradient flows through
  // thresholding, kernel search, or pseudo labels.
  ActivationMap cam = compute_cam(tokens.patch_tokens.value(), pv.get("cls.w").value(),
                                  tokens.n_h, tokens.n_w, sample.labels);
  ReliabilityMask mask = multi_threshold_filter(cam, cfg.lambda_lo, cfg.lambda_hi);
  RelationMaps rel = split_relations(mask);
  if (lir_active) {
    UncertainSet uncertain = kernel_search(rel, cfg.kernel_d, cfg.phi);
    out.cre = cre_loss(q, tokens.patch_tokens, rel, sample.labels, cfg.tau);
    out.ure = ure_loss(q, tokens.patch_tokens, uncertain, sample.labels);
  } else {
    out.cre = tape.constant(Tensor::scalar(0.0));
    out.ure = tape.constant(Tensor::scalar(0.0));
  }

  ActivationMap lam = compute_lam(q.value(), tokens.patch_tokens.value(), tokens.n_h,
                                  tokens.n_w, sample.labels);
  std::vector<int> pseudo = to_pseudo_label(lam, cfg.bg_threshold);
  Var seg_input = cfg.seg_encoder_grad ? tokens.patch_tokens
                                       : tape.constant(tokens.patch_tokens.value());
  Var seg_logits = decode(seg_input, cfg.num_classes, pv);
  out.seg = seg_loss(seg_logits, pseudo);
  return out;
}

}  // namespace

ParamSet Trainer::init_all_params(const RunConfig& cfg) {
  ParamSet p = init_encoder_params(cfg.encoder(), cfg.seed);
  p.append(init_gcr_params(cfg.embed_dim, cfg.seed + 1));
  p.append(init_classifier_params(cfg.embed_dim, cfg.num_classes, cfg.seed + 2));
  p.append(init_decoder_params(cfg.embed_dim, cfg.num_classes, cfg.seed + 3));
  return p;
}

Trainer::Trainer(const RunConfig& cfg)
    : cfg_(cfg), params_(init_all_params(cfg)), opt_(cfg.adamw()),
      train_(generate_split(cfg.data_seed, cfg.train_samples, cfg.synth())),
      batch_rng_(cfg.seed ^ 0xA5A5A5A5DEADBEEFULL) {
  cfg_.validate();
}

Trainer::Trainer(const RunConfig& cfg, ParamSet params)
    : cfg_(cfg), params_(std::move(params)), opt_(cfg.adamw()),
      train_(generate_split(cfg.data_seed, cfg.train_samples, cfg.synth())),
      batch_rng_(cfg.seed ^ 0xA5A5A5A5DEADBEEFULL) {
  cfg_.validate();
}

std::vector<SyntheticSample> Trainer::make_val_split() const {
  return generate_split(cfg_.data_seed + cfg_.train_samples, cfg_.val_samples, cfg_.synth());
}

LossReport Trainer::train_step() {
  ++step_;
  const bool lir_active = step_ > cfg_.warmup_steps;

  std::vector<SyntheticSample> batch;
  batch.reserve(cfg_.batch_size);
  std::uniform_int_distribution<std::size_t> pick(0, train_.size() - 1);
  std::uniform_int_distribution<int> coin(0, 1);
  for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
    const SyntheticSample& s = train_[pick(batch_rng_)];
    batch.push_back(coin(batch_rng_) ? flip_horizontal(s, cfg_.image_size) : s);
  }

  Tape tape;
  ParamVars pv(tape, params_);
  Var cls_acc = tape.constant(Tensor::scalar(0.0));
  Var mct_acc = cls_acc, cre_acc = cls_acc, ure_acc = cls_acc, seg_acc = cls_acc;
  for (const SyntheticSample& s : batch) {
    SampleLosses parts = forward_one(tape, pv, cfg_, s, lir_active);
    cls_acc = add(cls_acc, parts.cls);
    mct_acc = add(mct_acc, parts.mct);
    cre_acc = add(cre_acc, parts.cre);
    ure_acc = add(ure_acc, parts.ure);
    seg_acc = add(seg_acc, parts.seg);
  }
  const double inv_b = 1.0 / static_cast<double>(cfg_.batch_size);
  cls_acc = scale(cls_acc, inv_b);
  mct_acc = scale(mct_acc, inv_b);
  cre_acc = scale(cre_acc, inv_b);
  ure_acc = scale(ure_acc, inv_b);
  seg_acc = scale(seg_acc, inv_b);

  const LossWeights w = cfg_.weights();
  Var total = total_loss(cls_acc, mct_acc, cre_acc, ure_acc, seg_acc, w);
  if (!total.value().all_finite() || !std::isfinite(total.value().scalar_value())) {
    const std::string node = tape.first_nonfinite();
    throw NumericError("non-finite loss at step " + std::to_string(step_) +
                       (node.empty() ? "" : ", first bad node: " + node));
  }

  tape.backward(total);
  std::vector<Tensor> grads;
  grads.reserve(params_.count());
  for (const auto& [name, var] : pv.vars()) grads.push_back(tape.grad(var));
  opt_.step(params_, grads);

  LossReport r;
  r.step = step_;
  r.l_cls = cls_acc.value().scalar_value();
  r.l_mct = mct_acc.value().scalar_value();
  r.l_cre = cre_acc.value().scalar_value();
  r.l_ure = ure_acc.value().scalar_value();
  r.l_seg = seg_acc.value().scalar_value();
  r.l_more = r.l_cls + r.l_mct + w.alpha * r.l_cre + w.beta * r.l_ure;
  r.l_total = r.l_more + w.gamma * r.l_seg;
  return r;
}

SampleForward Trainer::forward_sample(const SyntheticSample& sample) const {
  Tape tape;
  ParamVars pv(tape, params_);
  const EncoderConfig enc_cfg = cfg_.encoder();
  Var image = tape.constant(sample.image);
  TokenBundle tokens = encode(image, enc_cfg, pv);
  GcrOutput gcr = gcr_forward(tokens.class_tokens, tokens.patch_tokens, pv, cfg_.effective_k());

  SampleForward out;
  out.class_tokens = tokens.class_tokens.value();
  out.patch_tokens = tokens.patch_tokens.value();
  out.q = cfg_.use_gcr ? gcr.q.value() : tokens.class_tokens.value();
  out.gcr_state = gcr.state;
  out.cam = compute_cam(out.patch_tokens, params_.get("cls.w"), tokens.n_h, tokens.n_w,
                        sample.labels);
  out.lam = compute_lam(out.q, out.patch_tokens, tokens.n_h, tokens.n_w, sample.labels);
  out.mask = multi_threshold_filter(out.cam, cfg_.lambda_lo, cfg_.lambda_hi);
  out.relations = split_relations(out.mask);
  out.uncertain = kernel_search(out.relations, cfg_.kernel_d, cfg_.phi);
  out.pseudo = to_pseudo_label(out.lam, cfg_.bg_threshold);

  Var seg_logits = decode(tokens.patch_tokens, cfg_.num_classes, pv);
  const Tensor& logits = seg_logits.value();
  out.seg_pred.resize(logits.rows());
  for (std::size_t p = 0; p < logits.rows(); ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits.at(p, c) > logits.at(p, best)) best = c;
    out.seg_pred[p] = static_cast<int>(best);
  }

  const Tensor cls_logits = classification_logits(tokens.patch_tokens, pv).value();
  out.cls_prob.resize(cls_logits.size());
  for (std::size_t c = 0; c < cls_logits.size(); ++c)
    out.cls_prob[c] = 1.0 / (1.0 + std::exp(-cls_logits[c]));
  return out;
}

EvalResult Trainer::evaluate(const std::vector<SyntheticSample>& split) const {
  const std::size_t nc = cfg_.num_classes + 1;
  ConfusionMatrix cm_seed(nc), cm_mask(nc);
  std::size_t exact = 0;
  for (const SyntheticSample& s : split) {
    SampleForward f = forward_sample(s);
    const std::size_t g = cfg_.image_size / cfg_.patch_size;
    cm_seed.accumulate(upsample_nearest(f.pseudo, g, g, cfg_.patch_size), s.mask);
    cm_mask.accumulate(upsample_nearest(f.seg_pred, g, g, cfg_.patch_size), s.mask);
    bool match = true;
    for (std::size_t c = 0; c < cfg_.num_classes; ++c)
      if ((f.cls_prob[c] > 0.5 ? 1 : 0) != s.labels[c]) match = false;
    if (match) ++exact;
  }
  EvalResult r;
  r.seed = compute_report(cm_seed);
  r.mask = compute_report(cm_mask);
  r.exact_match = split.empty() ? 0.0 : static_cast<double>(exact) / split.size();
  return r;
}

}  // namespace more
