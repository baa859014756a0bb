// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#include "geoni/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "geoni/png_io.hpp"

namespace geoni {

namespace fs = std::filesystem;
using nlohmann::json;

namespace detail {

Tensor mask_shear(const Tensor& mask, double amount, double center) {
  GEONI_REQUIRE(mask.ndim() == 5 && mask.dim(4) == 1, "mask_shear expects (B,X,Y,A,1)");
  const int B = mask.dim(0), X = mask.dim(1), Y = mask.dim(2), A = mask.dim(3);
  Tensor out({B, X, Y, A, 1});
  for (int a = 0; a < A; ++a) {
    const double shift = (a - center) * amount;
    const double fl = std::floor(shift);
    const int ishift = static_cast<int>(fl);
    const bool single = (shift - fl) == 0.0;
    for (int b = 0; b < B; ++b)
      for (int x = 0; x < X; ++x) {
        const int x0 = x + ishift, x1 = x0 + 1;
        const bool in_range = single ? (x0 >= 0 && x0 < X) : (x0 >= 0 && x1 < X);
        for (int y = 0; y < Y; ++y) {
          bool v = in_range;
          if (v)
            v = single ? mask(b, x0, y, a, 0) != 0.0
                       : mask(b, x0, y, a, 0) != 0.0 && mask(b, x1, y, a, 0) != 0.0;
          out(b, x, y, a, 0) = v ? 1.0 : 0.0;
        }
      }
  }
  return out;
}

Tensor mask_upsample_angular(const Tensor& mask, int alpha) {
  GEONI_REQUIRE(mask.ndim() == 5 && mask.dim(4) == 1, "mask_upsample expects (B,X,Y,A,1)");
  const int B = mask.dim(0), X = mask.dim(1), Y = mask.dim(2), A = mask.dim(3);
  const int A2 = alpha * (A - 1) + 1;
  Tensor out({B, X, Y, A2, 1});
  for (int b = 0; b < B; ++b)
    for (int x = 0; x < X; ++x)
      for (int y = 0; y < Y; ++y)
        for (int a2 = 0; a2 < A2; ++a2) {
          const int a0 = a2 / alpha;
          const bool exact = (a2 % alpha) == 0;
          bool v = mask(b, x, y, a0, 0) != 0.0;
          if (!exact) v = v && mask(b, x, y, a0 + 1, 0) != 0.0;
          out(b, x, y, a2, 0) = v ? 1.0 : 0.0;
        }
  return out;
}

namespace {

// Pads, runs one network forward over the D-fold batch, crops back.
ad::Node* padded_forward(ad::Tape& tape, ad::Node* x,
                         const std::function<ad::Node*(ad::Node*)>& net) {
  const int X = x->value.dim(1);
  const int pad = (kWidthFold - X % kWidthFold) % kWidthFold;
  ad::Node* h = pad > 0 ? tape.pad_width_edge(x, 0, pad) : x;
  h = net(h);
  return pad > 0 ? tape.crop_width(h, 0, pad) : h;
}

}  // namespace

SliceGraph build_slice_graph(ad::Tape& tape, ad::Node* input, const Tensor& input_mask,
                             const ShearHypothesisSet& D, const BoundParams* ni_bp,
                             const NiNetworkSpec* ni_spec, const BoundParams* dibr_bp,
                             const DibrNetworkSpec* dibr_spec, const PipelineConfig& cfg) {
  GEONI_REQUIRE(input->value.ndim() == 5 && input->value.dim(4) == 1,
                "build_slice_graph expects (B,X,Y,A,1)");
  const int B = input->value.dim(0), A = input->value.dim(3);
  GEONI_REQUIRE(A >= 2, "reconstruction needs at least 2 input views");
  const int alpha = cfg.alpha;
  GEONI_REQUIRE(alpha >= 2, "alpha must be >= 2");
  if (cfg.ni_mode == NiMode::Learned) {
    GEONI_REQUIRE(ni_bp && ni_spec, "learned mode needs an NI network");
    GEONI_REQUIRE(ni_spec->alpha == alpha, "NI network alpha does not match pipeline alpha");
  }
  const int Dn = D.count();
  const double in_center = A / 2.0;
  const int A2 = alpha * (A - 1) + 1;
  const double out_center = (A2 + alpha - 1) / 2.0;  // where in_center lands after upsampling

  Tensor m0 = input_mask;
  if (m0.empty()) m0 = Tensor::ones(input->value.dims());

  SliceGraph g;
  g.zero_index = D.index_of_zero();

  // Shear sweep, then one D*B-batch forward through the NI stage.
  std::vector<ad::Node*> sheared(static_cast<size_t>(Dn));
  std::vector<Tensor> sheared_masks(static_cast<size_t>(Dn));
  for (int d = 0; d < Dn; ++d) {
    sheared[d] = tape.shear(input, D.values[static_cast<size_t>(d)], in_center);
    sheared_masks[d] = mask_shear(m0, D.values[static_cast<size_t>(d)], in_center);
  }
  ad::Node* ni_in = Dn > 1 ? tape.concat0(sheared) : sheared[0];
  ad::Node* ni_out;
  if (cfg.ni_mode == NiMode::Learned) {
    ni_out = padded_forward(tape, ni_in,
                            [&](ad::Node* h) { return ni_forward(tape, *ni_bp, *ni_spec, h); });
  } else {
    ni_out = tape.upsample_angular_linear(ni_in, alpha);
  }

  // Undo each hypothesis's deformation and derive per-hypothesis masks.
  g.recons.resize(static_cast<size_t>(Dn));
  g.masks.resize(static_cast<size_t>(Dn));
  for (int d = 0; d < Dn; ++d) {
    ad::Node* y_d = Dn > 1 ? tape.narrow0(ni_out, d * B, B) : ni_out;
    const double dv = D.values[static_cast<size_t>(d)];
    g.recons[d] = tape.shear(y_d, -dv / alpha, out_center);
    Tensor mu = mask_upsample_angular(sheared_masks[d], alpha);
    g.masks[d] = mask_shear(mu, -dv / alpha, out_center);
  }

  // Cost volume: DIBR network over the same D*B batching, a test override,
  // or zeros (uniform blending).
  g.costs.resize(static_cast<size_t>(Dn));
  if (cfg.cost_override) {
    std::vector<Tensor> recon_values(static_cast<size_t>(Dn));
    for (int d = 0; d < Dn; ++d) recon_values[d] = g.recons[d]->value;
    std::vector<Tensor> costs = cfg.cost_override(D, recon_values, g.masks);
    GEONI_REQUIRE(static_cast<int>(costs.size()) == Dn, "cost override size mismatch");
    for (int d = 0; d < Dn; ++d) {
      GEONI_REQUIRE(costs[d].same_shape(g.recons[d]->value), "cost override shape mismatch");
      g.costs[d] = tape.leaf(std::move(costs[d]), false);
    }
  } else if (dibr_bp) {
    GEONI_REQUIRE(dibr_spec, "DIBR params without spec");
    ad::Node* dibr_in = Dn > 1 ? tape.concat0(g.recons) : g.recons[0];
    ad::Node* dibr_out = padded_forward(
        tape, dibr_in, [&](ad::Node* h) { return dibr_forward(tape, *dibr_bp, *dibr_spec, h); });
    for (int d = 0; d < Dn; ++d)
      g.costs[d] = Dn > 1 ? tape.narrow0(dibr_out, d * B, B) : dibr_out;
  } else {
    for (int d = 0; d < Dn; ++d) g.costs[d] = tape.leaf(Tensor(g.recons[d]->value.dims()), false);
  }

  g.blended = tape.blend_softmin(g.recons, g.costs, g.masks);
  return g;
}

}  // namespace detail

namespace {

std::vector<Tensor> split_volume(const Tensor& vol) {
  const int Dn = vol.dim(0);
  std::vector<int> dims(vol.dims().begin() + 1, vol.dims().end());
  const long long chunk = vol.size() / Dn;
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(Dn));
  for (int d = 0; d < Dn; ++d) {
    Tensor t(dims);
    std::memcpy(t.data(), vol.data() + d * chunk, sizeof(double) * chunk);
    out.push_back(std::move(t));
  }
  return out;
}

Tensor stack_tensors(const std::vector<Tensor>& parts) {
  std::vector<int> dims = parts.front().dims();
  dims.insert(dims.begin(), static_cast<int>(parts.size()));
  GEONI_REQUIRE(dims.size() <= 5, "stack_tensors: rank overflow");
  Tensor out(dims);
  long long off = 0;
  for (const Tensor& p : parts) {
    std::memcpy(out.data() + off, p.data(), sizeof(double) * p.size());
    off += p.size();
  }
  return out;
}

// Drops the leading B=1 axis.
Tensor squeeze_batch(const Tensor& t) {
  GEONI_REQUIRE(t.dim(0) == 1, "squeeze_batch expects B=1");
  std::vector<int> dims(t.dims().begin() + 1, t.dims().end());
  return t.reshaped(dims);
}

Tensor unsqueeze_batch(const Tensor& t) {
  std::vector<int> dims = t.dims();
  dims.insert(dims.begin(), 1);
  return t.reshaped(dims);
}

}  // namespace

ReconstructResult reconstruct_slice(const LightFieldSlice& input, const ShearHypothesisSet& D,
                                    const NiNetwork* ni, const DibrNetwork* dibr,
                                    const PipelineConfig& cfg) {
  GEONI_REQUIRE(input.channels() == 1, "reconstruct_slice expects a luminance slice");
  ad::Tape tape;
  BoundParams ni_bp, dibr_bp;
  if (ni) ni_bp = bind_params(tape, ni->params, false);
  if (dibr) dibr_bp = bind_params(tape, dibr->params, false);

  ad::Node* x = tape.leaf(unsqueeze_batch(input.data), false);
  Tensor m = input.mask.empty() ? Tensor() : unsqueeze_batch(input.mask);
  detail::SliceGraph g = detail::build_slice_graph(
      tape, x, m, D, ni ? &ni_bp : nullptr, ni ? &ni->spec : nullptr, dibr ? &dibr_bp : nullptr,
      dibr ? &dibr->spec : nullptr, cfg);

  const int Dn = D.count();
  std::vector<Tensor> recons(static_cast<size_t>(Dn)), costs(static_cast<size_t>(Dn)),
      masks(static_cast<size_t>(Dn));
  for (int d = 0; d < Dn; ++d) {
    recons[d] = squeeze_batch(g.recons[d]->value);
    costs[d] = squeeze_batch(g.costs[d]->value);
    masks[d] = squeeze_batch(g.masks[d]);
  }

  ReconstructResult res{LightFieldSlice{}, ReconstructionCostVolume{stack_tensors(costs)},
                        ShearStack{D, stack_tensors(recons), stack_tensors(masks)}};
  res.slice.data = squeeze_batch(g.blended->value);
  res.slice.mask = Tensor(res.slice.data.dims());
  for (long long i = 0; i < res.slice.mask.size(); ++i) {
    double any = 0.0;
    for (int d = 0; d < Dn; ++d) any = std::max(any, masks[d].data()[i]);
    res.slice.mask.data()[i] = any;
  }
  return res;
}

LightFieldSlice blend(const ShearStack& stack, const ReconstructionCostVolume& costs) {
  GEONI_REQUIRE(stack.slices.same_shape(costs.costs), "blend: stack/cost shape mismatch");
  std::vector<Tensor> s = split_volume(stack.slices);
  std::vector<Tensor> c = split_volume(costs.costs);
  std::vector<Tensor> m = split_volume(stack.masks);
  std::vector<Tensor> w = ad::softmin_weights(c, m);
  const int Dn = static_cast<int>(s.size());

  LightFieldSlice out;
  out.data = Tensor(s[0].dims());
  out.mask = Tensor(s[0].dims());
  const long long n = out.data.size();
  for (long long i = 0; i < n; ++i) {
    double acc = 0.0, any = 0.0;
    for (int d = 0; d < Dn; ++d) {
      acc += w[d].data()[i] * s[d].data()[i];
      any = std::max(any, m[d].data()[i]);
    }
    out.data.data()[i] = acc;
    out.mask.data()[i] = any;
  }
  return out;
}

namespace {

DepthVolume render_depth_impl(const ReconstructionCostVolume& costs, const ShearHypothesisSet& D,
                              const Tensor* masks) {
  const Tensor& vol = costs.costs;
  GEONI_REQUIRE(vol.ndim() == 5 && vol.dim(0) == D.count() && vol.dim(4) == 1,
                "render_depth: cost volume must be (D,X,Y,A2,1)");
  if (masks) GEONI_REQUIRE(masks->same_shape(vol), "render_depth: mask shape mismatch");
  const int Dn = D.count();
  const long long n = vol.size() / Dn;
  const int zi = D.index_of_zero();

  std::vector<const double*> cp(static_cast<size_t>(Dn)), mp(static_cast<size_t>(Dn), nullptr);
  for (int d = 0; d < Dn; ++d) {
    cp[d] = vol.data() + d * n;
    if (masks) mp[d] = masks->data() + d * n;
  }

  DepthVolume out;
  out.values = Tensor({vol.dim(1), vol.dim(2), vol.dim(3)});
  std::vector<double> w(static_cast<size_t>(Dn));
  for (long long i = 0; i < n; ++i) {
    {
      // softmin over hypotheses, invalid entries clamped
      double m = ad::kInvalidCost;
      for (int d = 0; d < Dn; ++d) {
        double e = mp[d] && mp[d][i] == 0.0 ? ad::kInvalidCost : cp[d][i];
        w[d] = e;
        if (e < m) m = e;
      }
      double z = 0.0;
      for (int d = 0; d < Dn; ++d) {
        w[d] = std::exp(-(w[d] - m));
        z += w[d];
      }
      for (int d = 0; d < Dn; ++d) w[d] /= z;
    }
    // Positive and negative hypotheses accumulate separately, mirrored
    // visit order, so a symmetric weight profile cancels exactly.
    double pos = 0.0, neg = 0.0;
    for (int d = zi + 1; d < Dn; ++d) pos += D.values[static_cast<size_t>(d)] * w[d];
    for (int d = zi - 1; d >= 0; --d) neg += -D.values[static_cast<size_t>(d)] * w[d];
    out.values.data()[i] = pos - neg;
  }
  return out;
}

}  // namespace

DepthVolume render_depth(const ReconstructionCostVolume& costs, const ShearHypothesisSet& D) {
  return render_depth_impl(costs, D, nullptr);
}

DepthVolume render_depth(const ReconstructionCostVolume& costs, const ShearHypothesisSet& D,
                         const Tensor& masks) {
  return render_depth_impl(costs, D, &masks);
}

// --- guided filter ----------------------------------------------------------

namespace {

// Mean over clipped box windows via an integral image; f is (X, Y) row-major.
std::vector<double> box_mean(const std::vector<double>& f, int X, int Y, int r) {
  if (r == 0) return f;  // 1x1 windows; skip the integral-image rounding
  std::vector<double> integ(static_cast<size_t>(X + 1) * (Y + 1), 0.0);
  for (int x = 0; x < X; ++x)
    for (int y = 0; y < Y; ++y)
      integ[(x + 1) * static_cast<size_t>(Y + 1) + (y + 1)] =
          f[x * static_cast<size_t>(Y) + y] + integ[x * static_cast<size_t>(Y + 1) + (y + 1)] +
          integ[(x + 1) * static_cast<size_t>(Y + 1) + y] -
          integ[x * static_cast<size_t>(Y + 1) + y];
  std::vector<double> out(static_cast<size_t>(X) * Y);
  for (int x = 0; x < X; ++x) {
    const int x1 = std::max(0, x - r), x2 = std::min(X - 1, x + r);
    for (int y = 0; y < Y; ++y) {
      const int y1 = std::max(0, y - r), y2 = std::min(Y - 1, y + r);
      const double sum = integ[(x2 + 1) * static_cast<size_t>(Y + 1) + (y2 + 1)] -
                         integ[x1 * static_cast<size_t>(Y + 1) + (y2 + 1)] -
                         integ[(x2 + 1) * static_cast<size_t>(Y + 1) + y1] +
                         integ[x1 * static_cast<size_t>(Y + 1) + y1];
      out[x * static_cast<size_t>(Y) + y] =
          sum / (static_cast<double>(x2 - x1 + 1) * (y2 - y1 + 1));
    }
  }
  return out;
}

std::vector<double> guided_filter_plane(const std::vector<double>& I,
                                        const std::vector<double>& p, int X, int Y, int r,
                                        double eps) {
  const size_t n = I.size();
  std::vector<double> II(n), Ip(n);
  for (size_t i = 0; i < n; ++i) {
    II[i] = I[i] * I[i];
    Ip[i] = I[i] * p[i];
  }
  std::vector<double> mI = box_mean(I, X, Y, r), mp = box_mean(p, X, Y, r),
                      mII = box_mean(II, X, Y, r), mIp = box_mean(Ip, X, Y, r);
  std::vector<double> a(n), b(n);
  for (size_t i = 0; i < n; ++i) {
    const double var = mII[i] - mI[i] * mI[i];
    const double cov = mIp[i] - mI[i] * mp[i];
    a[i] = cov / (var + eps);
    b[i] = mp[i] - a[i] * mI[i];
  }
  std::vector<double> ma = box_mean(a, X, Y, r), mb = box_mean(b, X, Y, r);
  std::vector<double> q(n);
  for (size_t i = 0; i < n; ++i) q[i] = ma[i] * I[i] + mb[i];
  return q;
}

}  // namespace

ReconstructionCostVolume filter_cost_volume(const ReconstructionCostVolume& costs,
                                            const LightFieldSlice& guide, int radius,
                                            double eps) {
  const Tensor& vol = costs.costs;
  GEONI_REQUIRE(vol.ndim() == 5 && vol.dim(4) == 1, "filter_cost_volume: bad cost volume");
  const int Dn = vol.dim(0), X = vol.dim(1), Y = vol.dim(2), A2 = vol.dim(3);
  GEONI_REQUIRE(guide.width() == X && guide.height() == Y && guide.angular() == A2,
                "filter_cost_volume: guide shape mismatch");
  GEONI_REQUIRE(radius >= 0, "filter_cost_volume: negative radius");

  ReconstructionCostVolume out{Tensor(vol.dims())};
  std::vector<double> I(static_cast<size_t>(X) * Y), p(static_cast<size_t>(X) * Y);
  for (int a = 0; a < A2; ++a) {
    for (int x = 0; x < X; ++x)
      for (int y = 0; y < Y; ++y) I[x * static_cast<size_t>(Y) + y] = guide.data(x, y, a, 0);
    for (int d = 0; d < Dn; ++d) {
      for (int x = 0; x < X; ++x)
        for (int y = 0; y < Y; ++y) p[x * static_cast<size_t>(Y) + y] = vol(d, x, y, a, 0);
      std::vector<double> q = guided_filter_plane(I, p, X, Y, radius, eps);
      for (int x = 0; x < X; ++x)
        for (int y = 0; y < Y; ++y) out.costs(d, x, y, a, 0) = q[x * static_cast<size_t>(Y) + y];
    }
  }
  return out;
}

// --- cascades and 4D --------------------------------------------------------

LightFieldSlice cascade_reconstruct(const LightFieldSlice& input, int stages,
                                    const std::vector<ShearHypothesisSet>& stage_sets,
                                    const NiNetwork* ni, const DibrNetwork* dibr,
                                    const PipelineConfig& cfg) {
  GEONI_REQUIRE(stages >= 1, "cascade_reconstruct: stages must be >= 1");
  GEONI_REQUIRE(!stage_sets.empty(), "cascade_reconstruct: need at least the stage-1 set");
  LightFieldSlice cur = input;
  for (int k = 0; k < stages; ++k) {
    ShearHypothesisSet D = [&] {
      if (k < static_cast<int>(stage_sets.size())) return stage_sets[static_cast<size_t>(k)];
      // disparities shrink by alpha per reconstruction
      std::vector<double> v = stage_sets.back().values;
      const double scale = std::pow(1.0 / cfg.alpha, k - static_cast<int>(stage_sets.size()) + 1);
      for (double& d : v) d *= scale;
      return ShearHypothesisSet(v);
    }();
    cur = reconstruct_slice(cur, D, ni, dibr, cfg).slice;
  }
  return cur;
}

namespace {

LightField4D reconstruct_axis(const LightField4D& lf, SliceAxis axis,
                              const ShearHypothesisSet& D, const NiNetwork* ni,
                              const DibrNetwork* dibr, const PipelineConfig& cfg) {
  std::vector<LightFieldSlice> slices = extract_slices(lf, axis);
  std::vector<LightFieldSlice> recs;
  recs.reserve(slices.size());
  for (const auto& sl : slices) recs.push_back(reconstruct_slice(sl, D, ni, dibr, cfg).slice);
  return reassemble_slices(recs, axis, "y");
}

}  // namespace

LightField4D reconstruct_4d(const LightField4D& lf, const ShearHypothesisSet& D,
                            const NiNetwork* ni, const DibrNetwork* dibr,
                            const PipelineConfig& cfg) {
  GEONI_REQUIRE(lf.channels() == 1, "reconstruct_4d expects luminance");
  const SliceAxis first = cfg.t_then_s ? SliceAxis::T : SliceAxis::S;
  const SliceAxis second = cfg.t_then_s ? SliceAxis::S : SliceAxis::T;
  LightField4D cur = lf;
  auto axis_count = [&](SliceAxis ax) {
    return ax == SliceAxis::S ? cur.angular_s() : cur.angular_t();
  };
  if (axis_count(first) > 1) cur = reconstruct_axis(cur, first, D, ni, dibr, cfg);
  if (axis_count(second) > 1) cur = reconstruct_axis(cur, second, D, ni, dibr, cfg);
  return cur;
}

LightFieldSlice upsample_chroma(const LightFieldSlice& chroma, const ShearHypothesisSet& D,
                                const ReconstructionCostVolume& y_costs,
                                const ShearStack& y_stack, int alpha) {
  GEONI_REQUIRE(chroma.channels() == 1, "upsample_chroma expects one plane");
  const int A = chroma.angular();
  const int A2 = alpha * (A - 1) + 1;
  const double in_center = A / 2.0;
  const double out_center = (A2 + alpha - 1) / 2.0;

  // Bilinear hypothesis stack for the plane, blended with the luma weights.
  ad::Tape tape;
  ad::Node* x = tape.leaf(unsqueeze_batch(chroma.data), false);
  std::vector<Tensor> recons;
  recons.reserve(static_cast<size_t>(D.count()));
  for (double d : D.values) {
    ad::Node* h = tape.shear(x, d, in_center);
    h = tape.upsample_angular_linear(h, alpha);
    h = tape.shear(h, -d / alpha, out_center);
    recons.push_back(squeeze_batch(h->value));
  }

  std::vector<Tensor> c = split_volume(y_costs.costs);
  std::vector<Tensor> m = split_volume(y_stack.masks);
  std::vector<Tensor> w = ad::softmin_weights(c, m);

  LightFieldSlice out;
  out.data = Tensor(recons[0].dims());
  out.mask = Tensor(recons[0].dims());
  const long long n = out.data.size();
  for (long long i = 0; i < n; ++i) {
    double acc = 0.0, any = 0.0;
    for (size_t d = 0; d < recons.size(); ++d) {
      acc += w[d].data()[i] * recons[d].data()[i];
      any = std::max(any, m[d].data()[i]);
    }
    out.data.data()[i] = acc;
    out.mask.data()[i] = any;
  }
  return out;
}

namespace {

LightField4D plane_of(const Tensor& data5, int c, const std::string& space) {
  LightField4D out;
  out.color_space = space;
  out.data = Tensor({data5.dim(0), data5.dim(1), data5.dim(2), data5.dim(3), 1});
  const long long n = out.data.size();
  const int C = data5.dim(4);
  for (long long i = 0; i < n; ++i) out.data.data()[i] = data5.data()[i * C + c];
  return out;
}

// One hierarchical stage over `axis` for the three YCbCr planes jointly:
// luma through the learned pipeline, chroma with the luma-derived weights.
void reconstruct_axis_ycbcr(LightField4D& y, LightField4D& cb, LightField4D& cr, SliceAxis axis,
                            const ShearHypothesisSet& D, const NiNetwork* ni,
                            const DibrNetwork* dibr, const PipelineConfig& cfg) {
  std::vector<LightFieldSlice> ys = extract_slices(y, axis);
  std::vector<LightFieldSlice> cbs = extract_slices(cb, axis);
  std::vector<LightFieldSlice> crs = extract_slices(cr, axis);
  std::vector<LightFieldSlice> yr, cbr, crr;
  for (size_t i = 0; i < ys.size(); ++i) {
    ReconstructResult r = reconstruct_slice(ys[i], D, ni, dibr, cfg);
    yr.push_back(r.slice);
    cbr.push_back(upsample_chroma(cbs[i], D, r.costs, r.stack, cfg.alpha));
    crr.push_back(upsample_chroma(crs[i], D, r.costs, r.stack, cfg.alpha));
  }
  y = reassemble_slices(yr, axis, "y");
  cb = reassemble_slices(cbr, axis, "y");
  cr = reassemble_slices(crr, axis, "y");
}

}  // namespace

LightField4D reconstruct_4d_rgb(const LightField4D& rgb, const ShearHypothesisSet& D,
                                const NiNetwork* ni, const DibrNetwork* dibr,
                                const PipelineConfig& cfg) {
  GEONI_REQUIRE(rgb.color_space == "rgb" && rgb.channels() == 3,
                "reconstruct_4d_rgb expects rgb input");
  Tensor ycbcr = rgb_to_ycbcr(rgb.data);
  LightField4D y = plane_of(ycbcr, 0, "y");
  LightField4D cb = plane_of(ycbcr, 1, "y");
  LightField4D cr = plane_of(ycbcr, 2, "y");

  const SliceAxis first = cfg.t_then_s ? SliceAxis::T : SliceAxis::S;
  const SliceAxis second = cfg.t_then_s ? SliceAxis::S : SliceAxis::T;
  auto axis_count = [&](SliceAxis ax) { return ax == SliceAxis::S ? y.angular_s() : y.angular_t(); };
  if (axis_count(first) > 1) reconstruct_axis_ycbcr(y, cb, cr, first, D, ni, dibr, cfg);
  if (axis_count(second) > 1) reconstruct_axis_ycbcr(y, cb, cr, second, D, ni, dibr, cfg);

  Tensor merged({y.width(), y.height(), y.angular_s(), y.angular_t(), 3});
  const long long n = y.data.size();
  for (long long i = 0; i < n; ++i) {
    merged.data()[i * 3 + 0] = y.data.data()[i];
    merged.data()[i * 3 + 1] = cb.data.data()[i];
    merged.data()[i * 3 + 2] = cr.data.data()[i];
  }
  LightField4D out;
  out.color_space = "rgb";
  out.data = ycbcr_to_rgb(merged);
  for (long long i = 0; i < out.data.size(); ++i)
    out.data.data()[i] = std::clamp(out.data.data()[i], 0.0, 1.0);
  return out;
}

LightFieldSlice ni_only(const LightFieldSlice& input, const NiNetwork& ni,
                        const PipelineConfig& cfg) {
  PipelineConfig c = cfg;
  c.ni_mode = NiMode::Learned;
  return reconstruct_slice(input, ShearHypothesisSet({0.0}), &ni, nullptr, c).slice;
}

ReconstructResult bilinear_geo_ni(const LightFieldSlice& input, const ShearHypothesisSet& D,
                                  const DibrNetwork* dibr, const PipelineConfig& cfg) {
  PipelineConfig c = cfg;
  c.ni_mode = NiMode::Bilinear;
  return reconstruct_slice(input, D, nullptr, dibr, c);
}

// --- exports -----------------------------------------------------------------

void save_cost_volume(const std::string& path_prefix, const ReconstructionCostVolume& costs) {
  const Tensor& vol = costs.costs;
  std::ofstream raw(path_prefix + ".f32", std::ios::binary);
  GEONI_REQUIRE(raw.good(), "cannot write " + path_prefix + ".f32");
  std::vector<float> buf(static_cast<size_t>(vol.size()));
  for (long long i = 0; i < vol.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(vol.data()[i]);
  raw.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));

  json header;
  header["dtype"] = "float32";
  header["byte_order"] = "little";
  header["dims"] = vol.dims();
  header["axes"] = {"hypothesis", "x", "y", "view", "channel"};
  std::ofstream hdr(path_prefix + ".json");
  hdr << header.dump(2) << "\n";
}

void save_depth_volume(const std::string& dir, const DepthVolume& depth, int view_t_index) {
  fs::create_directories(dir);
  const Tensor& v = depth.values;
  GEONI_REQUIRE(v.ndim() == 3, "save_depth_volume expects (X,Y,A2)");
  double d_min = v.data()[0], d_max = v.data()[0];
  for (long long i = 0; i < v.size(); ++i) {
    d_min = std::min(d_min, v.data()[i]);
    d_max = std::max(d_max, v.data()[i]);
  }
  const double span = d_max > d_min ? d_max - d_min : 1.0;

  Image img;
  img.width = v.dim(0);
  img.height = v.dim(1);
  img.channels = 1;
  img.bit_depth = 16;
  img.pixels.resize(static_cast<size_t>(img.width) * img.height);
  for (int a = 0; a < v.dim(2); ++a) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        img.pixels[static_cast<size_t>(y) * img.width + x] = static_cast<uint16_t>(
            std::lround((v(x, y, a) - d_min) / span * 65535.0));
    char name[40];
    std::snprintf(name, sizeof(name), "depth_%02d_%02d.png", a, view_t_index);
    write_png((fs::path(dir) / name).string(), img);
  }
  json scale;
  scale["d_min"] = d_min;
  scale["d_max"] = d_max;
  std::ofstream out(fs::path(dir) / "depth_scale.json");
  out << scale.dump(2) << "\n";
}

}  // namespace geoni
