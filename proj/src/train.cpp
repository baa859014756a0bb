// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#include "geoni/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "geoni/checkpoint.hpp"
#include "geoni/metrics.hpp"
#include "geoni/rng.hpp"

namespace geoni {

namespace fs = std::filesystem;
using nlohmann::json;

LossNodes training_loss(ad::Tape& tape, const detail::SliceGraph& graph, const Tensor& label,
                        const Tensor& label_mask) {
  LossNodes out{};
  out.zero_hypothesis_term =
      tape.l1_masked_mean(graph.recons[static_cast<size_t>(graph.zero_index)], label, label_mask);

  Tensor conj = label_mask.empty() ? Tensor::ones(label.dims()) : label_mask;
  long long support = 0;
  for (long long i = 0; i < conj.size(); ++i) {
    double v = conj.data()[i];
    for (const Tensor& m : graph.masks)
      if (m.data()[i] == 0.0) {
        v = 0.0;
        break;
      }
    conj.data()[i] = v;
    if (v != 0.0) ++support;
  }

  if (support == 0) {
    std::cerr << "warning: blend-term mask has empty support; term dropped\n";
    out.blend_term = nullptr;
    out.total = out.zero_hypothesis_term;
  } else {
    out.blend_term = tape.l1_masked_mean(graph.blended, label, conj);
    out.total = tape.add(out.zero_hypothesis_term, out.blend_term);
  }
  return out;
}

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(const std::vector<std::pair<Tensor*, const Tensor*>>& params_and_grads,
                         double clip_norm) {
  if (m_.empty()) {
    m_.resize(params_and_grads.size());
    v_.resize(params_and_grads.size());
    for (size_t i = 0; i < params_and_grads.size(); ++i) {
      m_[i].assign(static_cast<size_t>(params_and_grads[i].first->size()), 0.0);
      v_[i].assign(static_cast<size_t>(params_and_grads[i].first->size()), 0.0);
    }
  }
  GEONI_REQUIRE(m_.size() == params_and_grads.size(), "optimizer state/parameter count mismatch");

  double sq = 0.0;
  for (const auto& [p, g] : params_and_grads) {
    if (!g) continue;
    GEONI_REQUIRE(g->size() == p->size(), "gradient/parameter size mismatch");
    for (long long i = 0; i < g->size(); ++i) sq += g->data()[i] * g->data()[i];
  }
  const double norm = std::sqrt(sq);
  GEONI_REQUIRE(std::isfinite(norm), "non-finite gradient norm");
  const double scale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t k = 0; k < params_and_grads.size(); ++k) {
    const Tensor* g = params_and_grads[k].second;
    if (!g) continue;
    Tensor* p = params_and_grads[k].first;
    for (long long i = 0; i < p->size(); ++i) {
      const double gi = g->data()[i] * scale;
      m_[k][static_cast<size_t>(i)] = beta1_ * m_[k][static_cast<size_t>(i)] + (1.0 - beta1_) * gi;
      v_[k][static_cast<size_t>(i)] =
          beta2_ * v_[k][static_cast<size_t>(i)] + (1.0 - beta2_) * gi * gi;
      p->data()[i] -= lr_ * (m_[k][static_cast<size_t>(i)] / bc1) /
                      (std::sqrt(v_[k][static_cast<size_t>(i)] / bc2) + eps_);
    }
  }
}

namespace {

// Stacks per-sample (X,Y,A,1) tensors into (B,X,Y,A,1).
Tensor stack_batch(const std::vector<const Tensor*>& parts) {
  std::vector<int> dims = parts.front()->dims();
  dims.insert(dims.begin(), static_cast<int>(parts.size()));
  Tensor out(dims);
  long long off = 0;
  for (const Tensor* p : parts) {
    std::memcpy(out.data() + off, p->data(), sizeof(double) * p->size());
    off += p->size();
  }
  return out;
}

struct Batch {
  Tensor input, input_mask, label, label_mask;
};

Batch make_batch(const Dataset& ds, const std::vector<long long>& idx, size_t begin, size_t end) {
  std::vector<TrainSample> samples;
  samples.reserve(end - begin);
  for (size_t i = begin; i < end; ++i) samples.push_back(ds.sample(idx[i]));
  std::vector<const Tensor*> in, im, lb, lm;
  for (const TrainSample& s : samples) {
    in.push_back(&s.input);
    im.push_back(&s.input_mask);
    lb.push_back(&s.label);
    lm.push_back(&s.label_mask);
  }
  return Batch{stack_batch(in), stack_batch(im), stack_batch(lb), stack_batch(lm)};
}

void fisher_yates(std::vector<long long>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.bounded(i)]);
}

struct CheckpointPaths {
  std::string ni, dibr;
};

CheckpointPaths save_pair(const std::string& out_dir, const std::string& tag,
                          const NiNetwork& ni, const DibrNetwork& dibr) {
  CheckpointPaths p{(fs::path(out_dir) / ("ni_" + tag + ".ckpt")).string(),
                    (fs::path(out_dir) / ("dibr_" + tag + ".ckpt")).string()};
  save_ni_checkpoint(p.ni, ni);
  save_dibr_checkpoint(p.dibr, dibr);
  return p;
}

// Global PSNR of the blended output against labels across all validation
// batches, measured on the loss conjunction mask.
double validation_psnr(const TrainConfig& cfg, const Dataset& ds,
                       const std::vector<long long>& val_idx, const NiNetwork& ni,
                       const DibrNetwork& dibr) {
  if (val_idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  PipelineConfig pcfg;
  pcfg.alpha = cfg.alpha;
  double se = 0.0;
  long long count = 0;
  const size_t bs = static_cast<size_t>(cfg.batch_size);
  for (size_t begin = 0; begin < val_idx.size(); begin += bs) {
    const size_t end = std::min(val_idx.size(), begin + bs);
    Batch b = make_batch(ds, val_idx, begin, end);
    ad::Tape tape;
    BoundParams ni_bp = bind_params(tape, ni.params, false);
    BoundParams dibr_bp = bind_params(tape, dibr.params, false);
    detail::SliceGraph g =
        detail::build_slice_graph(tape, tape.leaf(std::move(b.input), false), b.input_mask,
                                  cfg.hypotheses, &ni_bp, &ni.spec, &dibr_bp, &dibr.spec, pcfg);
    for (long long i = 0; i < b.label.size(); ++i) {
      if (b.label_mask.data()[i] == 0.0) continue;
      bool ok = true;
      for (const Tensor& m : g.masks)
        if (m.data()[i] == 0.0) {
          ok = false;
          break;
        }
      if (!ok) continue;
      const double d = g.blended->value.data()[i] - b.label.data()[i];
      se += d * d;
      ++count;
    }
  }
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  const double mse = se / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& dataset, NiNetwork& ni,
                  DibrNetwork& dibr, const std::string& out_dir) {
  GEONI_REQUIRE(dataset.size() > 0, "empty dataset");
  GEONI_REQUIRE(ni.spec.alpha == cfg.alpha, "network alpha does not match train config");
  fs::create_directories(out_dir);

  const std::vector<long long> train_idx_base = dataset.train_indices();
  const std::vector<long long> val_idx = dataset.val_indices();
  GEONI_REQUIRE(!train_idx_base.empty(), "no training patches after validation split");

  PipelineConfig pcfg;
  pcfg.alpha = cfg.alpha;
  AdamOptimizer opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);

  TrainResult res;
  res.metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(res.metrics_path);
  GEONI_REQUIRE(metrics.good(), "cannot write metrics log");

  CheckpointPaths last_good;  // empty until something is saved
  double best_val = -std::numeric_limits<double>::infinity();
  long long gstep = 0;
  double last_loss = 0.0;
  bool stop = false;

  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    std::vector<long long> order = train_idx_base;
    Rng shuffle_rng(hash_combine(cfg.seed, static_cast<uint64_t>(epoch) + 1));
    fisher_yates(order, shuffle_rng);

    const bool train_dibr = epoch >= cfg.pretrain_ni_epochs;
    double epoch_loss = 0.0;
    long long epoch_steps = 0;

    for (size_t begin = 0; begin < order.size() && !stop;
         begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      Batch b = make_batch(dataset, order, begin, end);

      ad::Tape tape;
      BoundParams ni_bp = bind_params(tape, ni.params, true);
      BoundParams dibr_bp = bind_params(tape, dibr.params, train_dibr);
      detail::SliceGraph g =
          detail::build_slice_graph(tape, tape.leaf(std::move(b.input), true), b.input_mask,
                                    cfg.hypotheses, &ni_bp, &ni.spec, &dibr_bp, &dibr.spec, pcfg);
      LossNodes loss = training_loss(tape, g, b.label, b.label_mask);
      const double loss_value = loss.total->value(0);

      if (!std::isfinite(loss_value)) {
        CheckpointPaths p = last_good.ni.empty() ? save_pair(out_dir, "lastgood", ni, dibr)
                                                 : last_good;
        throw DivergenceError("non-finite training loss at step " + std::to_string(gstep), p.ni);
      }
      tape.backward(loss.total);

      std::vector<std::pair<Tensor*, const Tensor*>> pg;
      for (auto& [name, t] : ni.params.items) {
        const Tensor& grad = ni_bp.at(name)->grad;
        pg.emplace_back(&t, grad.empty() ? nullptr : &grad);
      }
      for (auto& [name, t] : dibr.params.items) {
        const Tensor& grad = dibr_bp.at(name)->grad;
        pg.emplace_back(&t, train_dibr && !grad.empty() ? &grad : nullptr);
      }
      opt.step(pg, cfg.grad_clip_norm);

      ++gstep;
      ++epoch_steps;
      last_loss = loss_value;
      epoch_loss += loss_value;
      json line;
      line["epoch"] = epoch;
      line["step"] = gstep;
      line["loss"] = loss_value;
      metrics << line.dump() << "\n";
      if (cfg.max_steps > 0 && gstep >= cfg.max_steps) stop = true;
    }

    const double vp = validation_psnr(cfg, dataset, val_idx, ni, dibr);
    json line;
    line["epoch"] = epoch;
    line["step"] = gstep;
    line["loss"] = epoch_steps > 0 ? epoch_loss / static_cast<double>(epoch_steps) : 0.0;
    if (std::isfinite(vp))
      line["val_psnr"] = vp;
    else
      line["val_psnr"] = nullptr;
    metrics << line.dump() << "\n";
    metrics.flush();

    if (std::isfinite(vp) && vp > best_val) {
      best_val = vp;
      save_pair(out_dir, "best", ni, dibr);
    }
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      last_good = save_pair(out_dir, "epoch" + std::to_string(epoch + 1), ni, dibr);
  }

  last_good = save_pair(out_dir, "last", ni, dibr);
  res.steps = gstep;
  res.final_loss = last_loss;
  res.best_val_psnr = best_val;
  res.last_checkpoint_ni = last_good.ni;
  res.last_checkpoint_dibr = last_good.dibr;
  return res;
}

}  // namespace geoni
