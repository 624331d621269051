#include "sparse_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "error.hpp"
#include "parallel.hpp"

namespace evuav {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

LayerParams::LayerParams(std::string n, std::vector<int> s)
    : name(std::move(n)), shape(std::move(s)), values(shape_size(shape), 0.0), grads(shape_size(shape), 0.0) {}

void LayerParams::zero_grad() { std::fill(grads.begin(), grads.end(), 0.0); }

void KernelSpec::check() const {
  for (int k : size) require(k > 0 && k % 2 == 1, "KernelSpec: kernel extents must be odd and positive");
  require(dilation > 0, "KernelSpec: dilation must be positive");
  require(in_channels > 0 && out_channels > 0, "KernelSpec: channel counts must be positive");
  require(groups > 0 && in_channels % groups == 0 && out_channels % groups == 0,
          "KernelSpec: groups must divide both channel counts");
}

std::vector<int> KernelSpec::param_shape() const {
  return {groups, out_channels / groups, in_channels / groups, size[0], size[1], size[2]};
}

namespace ops {

namespace {

// Sums per-chunk partial gradient buffers in chunk order.
void reduce_partials(std::vector<std::vector<double>>& partials, std::vector<double>& into) {
  for (const auto& p : partials) {
    for (std::size_t i = 0; i < p.size(); ++i) into[i] += p[i];
  }
}

}  // namespace

SparseGrid submanifold_conv(const SparseGrid& in, const KernelSpec& spec, const LayerParams& weight) {
  spec.check();
  require(in.channels() == spec.in_channels, "submanifold_conv: input has " + std::to_string(in.channels()) +
                                                 " channels, kernel expects " + std::to_string(spec.in_channels));
  require(weight.shape == spec.param_shape(), "submanifold_conv: weight shape mismatch for " + weight.name);

  const int taps = spec.taps();
  const int G = spec.groups, ig = spec.in_channels / G, og = spec.out_channels / G;
  // Transpose to [tap][g][c][o] so the inner loop runs over outputs.
  std::vector<double> wt(weight.size());
  for (int g = 0; g < G; ++g)
    for (int o = 0; o < og; ++o)
      for (int c = 0; c < ig; ++c)
        for (int t = 0; t < taps; ++t)
          wt[((static_cast<std::size_t>(t) * G + g) * ig + c) * og + o] =
              weight.values[((static_cast<std::size_t>(g) * og + o) * ig + c) * taps + t];

  const NeighborTable& nb = in.active->neighbors(spec.extent());
  Features out(in.size(), spec.out_channels);
  parallel_for(in.size(), [&](std::size_t i) {
    double* orow = out.row(i);
    for (int t = 0; t < taps; ++t) {
      const auto j = nb.at(i, t);
      if (j < 0) continue;
      const double* irow = in.features.row(j);
      const double* w = wt.data() + static_cast<std::size_t>(t) * G * og * ig;
      for (int g = 0; g < G; ++g) {
        const double* x = irow + g * ig;
        double* y = orow + g * og;
        for (int c = 0; c < ig; ++c, w += og) {
          const double xc = x[c];
          if (xc == 0.0) continue;
          for (int o = 0; o < og; ++o) y[o] += w[o] * xc;
        }
      }
    }
  });
  return in.with_features(std::move(out));
}

Features conv_backward(const SparseGrid& in, const KernelSpec& spec, LayerParams& weight, const Features& cot_out) {
  spec.check();
  require(cot_out.rows == in.size() && cot_out.cols == spec.out_channels, "conv_backward: cotangent shape mismatch");
  const int taps = spec.taps();
  const int G = spec.groups, ig = spec.in_channels / G, og = spec.out_channels / G;
  const NeighborTable& nb = in.active->neighbors(spec.extent());

  // Input cotangent as a gather: offsets are symmetric, so site j feeds site i
  // through tap t exactly when i is j's neighbor through the mirrored tap.
  // [tap][g][o][c] layout for both the weights and the weight gradient
  const std::size_t per_tap = static_cast<std::size_t>(G) * og * ig;
  auto tap_major = [&](int g, int o, int c, int t) {
    return static_cast<std::size_t>(t) * per_tap + (static_cast<std::size_t>(g) * og + o) * ig + c;
  };
  auto native = [&](int g, int o, int c, int t) {
    return ((static_cast<std::size_t>(g) * og + o) * ig + c) * taps + t;
  };
  std::vector<double> wt(weight.size());
  for (int g = 0; g < G; ++g)
    for (int o = 0; o < og; ++o)
      for (int c = 0; c < ig; ++c)
        for (int t = 0; t < taps; ++t) wt[tap_major(g, o, c, t)] = weight.values[native(g, o, c, t)];

  Features cot_in(in.size(), spec.in_channels);
  parallel_for(in.size(), [&](std::size_t j) {
    double* crow = cot_in.row(j);
    for (int tm = 0; tm < taps; ++tm) {
      const auto i = nb.at(j, tm);
      if (i < 0) continue;
      const int t = taps - 1 - tm;
      const double* co = cot_out.row(i);
      for (int g = 0; g < G; ++g) {
        double* dx = crow + g * ig;
        for (int o = 0; o < og; ++o) {
          const double gval = co[g * og + o];
          if (gval == 0.0) continue;
          const double* w = wt.data() + tap_major(g, o, 0, t);
          for (int c = 0; c < ig; ++c) dx[c] += w[c] * gval;
        }
      }
    }
  });

  std::vector<std::vector<double>> partials(chunk_count(in.size()), std::vector<double>(weight.size(), 0.0));
  parallel_chunks(in.size(), [&](int chunk, std::size_t b, std::size_t e) {
    auto& gw = partials[chunk];
    for (std::size_t i = b; i < e; ++i) {
      const double* co = cot_out.row(i);
      for (int t = 0; t < taps; ++t) {
        const auto j = nb.at(i, t);
        if (j < 0) continue;
        const double* x = in.features.row(j);
        for (int g = 0; g < G; ++g) {
          for (int o = 0; o < og; ++o) {
            const double gval = co[g * og + o];
            if (gval == 0.0) continue;
            double* dst = gw.data() + tap_major(g, o, 0, t);
            for (int c = 0; c < ig; ++c) dst[c] += gval * x[g * ig + c];
          }
        }
      }
    }
  });
  for (auto& part : partials) {
    std::vector<double> back(part.size());
    for (int g = 0; g < G; ++g)
      for (int o = 0; o < og; ++o)
        for (int c = 0; c < ig; ++c)
          for (int t = 0; t < taps; ++t) back[native(g, o, c, t)] = part[tap_major(g, o, c, t)];
    part.swap(back);
  }
  reduce_partials(partials, weight.grads);
  return cot_in;
}

Features relu(const Features& x) {
  Features y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Features relu_backward(const Features& out, const Features& cot_out) {
  Features g = cot_out;
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    if (!(out.data[i] > 0.0)) g.data[i] = 0.0;
  }
  return g;
}

Features linear(const Features& x, const LayerParams& weight, const LayerParams* bias) {
  require(weight.shape.size() == 2 && weight.shape[1] == x.cols, "linear: weight shape mismatch for " + weight.name);
  const int out_c = weight.shape[0], in_c = weight.shape[1];
  require(!bias || bias->size() == static_cast<std::size_t>(out_c), "linear: bias shape mismatch");
  // wt is [in][out] so the inner loop runs over outputs
  std::vector<double> wt(weight.size());
  for (int o = 0; o < out_c; ++o)
    for (int c = 0; c < in_c; ++c) wt[static_cast<std::size_t>(c) * out_c + o] = weight.values[static_cast<std::size_t>(o) * in_c + c];
  Features y(x.rows, out_c);
  parallel_for(x.rows, [&](std::size_t i) {
    const double* xr = x.row(i);
    double* yr = y.row(i);
    if (bias) std::copy_n(bias->values.data(), out_c, yr);
    for (int c = 0; c < in_c; ++c) {
      const double xc = xr[c];
      if (xc == 0.0) continue;
      const double* w = wt.data() + static_cast<std::size_t>(c) * out_c;
      for (int o = 0; o < out_c; ++o) yr[o] += w[o] * xc;
    }
  });
  return y;
}

Features linear_backward(const Features& x, LayerParams& weight, LayerParams* bias, const Features& cot_out) {
  const int out_c = weight.shape[0], in_c = weight.shape[1];
  require(cot_out.cols == out_c && cot_out.rows == x.rows, "linear_backward: cotangent shape mismatch");
  Features cot_in(x.rows, in_c);
  parallel_for(x.rows, [&](std::size_t i) {
    const double* g = cot_out.row(i);
    double* dx = cot_in.row(i);
    for (int o = 0; o < out_c; ++o) {
      if (g[o] == 0.0) continue;
      const double* w = weight.values.data() + static_cast<std::size_t>(o) * in_c;
      for (int c = 0; c < in_c; ++c) dx[c] += w[c] * g[o];
    }
  });
  const std::size_t wsize = weight.size() + (bias ? bias->size() : 0);
  std::vector<std::vector<double>> partials(chunk_count(x.rows), std::vector<double>(wsize, 0.0));
  parallel_chunks(x.rows, [&](int chunk, std::size_t b, std::size_t e) {
    auto& p = partials[chunk];
    for (std::size_t i = b; i < e; ++i) {
      const double* g = cot_out.row(i);
      const double* xr = x.row(i);
      for (int o = 0; o < out_c; ++o) {
        if (g[o] == 0.0) continue;
        double* dw = p.data() + static_cast<std::size_t>(o) * in_c;
        for (int c = 0; c < in_c; ++c) dw[c] += g[o] * xr[c];
        if (bias) p[weight.size() + o] += g[o];
      }
    }
  });
  for (const auto& p : partials) {
    for (std::size_t k = 0; k < weight.size(); ++k) weight.grads[k] += p[k];
    if (bias) {
      for (std::size_t k = 0; k < bias->size(); ++k) bias->grads[k] += p[weight.size() + k];
    }
  }
  return cot_in;
}

Features slice_channels(const Features& x, int begin, int count) {
  require(begin >= 0 && count >= 0 && begin + count <= x.cols, "slice_channels: range outside feature width");
  Features y(x.rows, count);
  for (std::size_t i = 0; i < x.rows; ++i) std::copy_n(x.row(i) + begin, count, y.row(i));
  return y;
}

void place_channels(Features& dst, const Features& part, int begin) {
  require(part.rows == dst.rows && begin + part.cols <= dst.cols, "place_channels: range outside feature width");
  for (std::size_t i = 0; i < dst.rows; ++i) std::copy_n(part.row(i), part.cols, dst.row(i) + begin);
}

Downsampled strided_downsample(const SparseGrid& child, std::array<int, 3> stride, const LayerParams& weight) {
  const auto& coarse = child.active->coarsen(stride);
  const auto keys = child.active->keys();
  Downsampled out;
  out.parent_of_child = coarse.parent_of_child;
  const std::size_t n_parent = coarse.parent->size();

  const int C = child.channels();
  out.pooled = Features(n_parent, C);
  std::fill(out.pooled.data.begin(), out.pooled.data.end(), -std::numeric_limits<double>::infinity());
  out.argmax.assign(n_parent * C, -1);
  // Children visited in row order, so ties keep the lowest child row.
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto p = out.parent_of_child[i];
    const double* x = child.features.row(i);
    double* m = out.pooled.row(p);
    for (int c = 0; c < C; ++c) {
      if (x[c] > m[c]) {
        m[c] = x[c];
        out.argmax[p * C + c] = static_cast<std::int32_t>(i);
      }
    }
  }

  out.grid.voxel_size = {child.voxel_size.x * stride[0], child.voxel_size.y * stride[1], child.voxel_size.t * stride[2]};
  out.grid.t_base = child.t_base;
  out.grid.active = coarse.parent;
  out.grid.features = linear(out.pooled, weight);
  return out;
}

Features downsample_backward(const SparseGrid& child, const Downsampled& fwd, LayerParams& weight,
                             const Features& cot_parent) {
  const Features cot_pooled = linear_backward(fwd.pooled, weight, nullptr, cot_parent);
  const int C = child.channels();
  Features cot_child(child.size(), C);
  for (std::size_t p = 0; p < cot_pooled.rows; ++p) {
    for (int c = 0; c < C; ++c) cot_child.at(fwd.argmax[p * C + c], c) += cot_pooled.at(p, c);
  }
  return cot_child;
}

std::vector<std::int32_t> parent_rows(const SparseGrid& parent, const SparseGrid& child) {
  const auto& pv = parent.voxel_size;
  const auto& cv = child.voxel_size;
  require(pv.x % cv.x == 0 && pv.y % cv.y == 0 && pv.t % cv.t == 0 && parent.t_base == child.t_base,
          "upsample_to: parent grid is not a coarsening of the child template");
  const auto sx = static_cast<std::int32_t>(pv.x / cv.x);
  const auto sy = static_cast<std::int32_t>(pv.y / cv.y);
  const auto st = static_cast<std::int32_t>(pv.t / cv.t);
  const auto& coarse = child.active->coarsen({sx, sy, st});
  if (coarse.parent == parent.active) return coarse.parent_of_child;
  const auto keys = child.active->keys();
  std::vector<std::int32_t> rows(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    rows[i] = parent.active->find({keys[i].ix / sx, keys[i].iy / sy, keys[i].it / st});
    if (rows[i] < 0) fail(ErrorKind::Runtime, "upsample_to: child voxel has no parent");
  }
  return rows;
}

SparseGrid upsample_to(const SparseGrid& parent, const SparseGrid& child_template, const LayerParams& weight) {
  const auto rows = parent_rows(parent, child_template);
  const Features mapped = linear(parent.features, weight);
  Features out(child_template.size(), mapped.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(mapped.row(rows[i]), mapped.cols, out.row(i));
  SparseGrid g = child_template.with_features(std::move(out));
  return g;
}

Features upsample_backward(const SparseGrid& parent, const SparseGrid& child_template, LayerParams& weight,
                           const Features& cot_child) {
  const auto rows = parent_rows(parent, child_template);
  Features cot_mapped(parent.size(), cot_child.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* g = cot_child.row(i);
    double* dst = cot_mapped.row(rows[i]);
    for (int c = 0; c < cot_child.cols; ++c) dst[c] += g[c];
  }
  return linear_backward(parent.features, weight, nullptr, cot_mapped);
}

Features token_self_attention(const Features& tokens, const AttentionParams& p, AttentionCache* cache) {
  const std::size_t n = tokens.rows;
  const int C = tokens.cols;
  for (const LayerParams* w : {p.query, p.key, p.value, p.out}) {
    require(w && w->shape == std::vector<int>({C, C}), "token_self_attention: projection must be [C, C]");
  }
  AttentionCache local;
  AttentionCache& c = cache ? *cache : local;
  c.q = linear(tokens, *p.query);
  c.k = linear(tokens, *p.key);
  c.v = linear(tokens, *p.value);
  c.attn.assign(n * n, 0.0);
  c.heads = Features(n, C);
  const double scale = 1.0 / std::sqrt(static_cast<double>(C));
  parallel_for(n, [&](std::size_t i) {
    double* a = c.attn.data() + i * n;
    const double* qi = c.q.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      const double* kj = c.k.row(j);
      double s = 0.0;
      for (int ch = 0; ch < C; ++ch) s += qi[ch] * kj[ch];
      a[j] = s * scale;
      mx = std::max(mx, a[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (a[j] = std::exp(a[j] - mx));
    double* h = c.heads.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      a[j] /= z;
      const double* vj = c.v.row(j);
      for (int ch = 0; ch < C; ++ch) h[ch] += a[j] * vj[ch];
    }
  });
  Features y = linear(c.heads, *p.out);
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += tokens.data[i];
  return y;
}

Features attention_backward(const Features& tokens, const AttentionParams& p, const AttentionCache& c,
                            const Features& cot_out) {
  const std::size_t n = tokens.rows;
  const int C = tokens.cols;
  const double scale = 1.0 / std::sqrt(static_cast<double>(C));
  const Features d_heads = linear_backward(c.heads, *p.out, nullptr, cot_out);

  Features dq(n, C), dk(n, C), dv(n, C);
  // dS = A * (dA - rowsum(A * dA)), dA = dH V^T.
  std::vector<double> ds(n * n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const double* a = c.attn.data() + i * n;
    const double* dh = d_heads.row(i);
    double* dsr = ds.data() + i * n;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double* vj = c.v.row(j);
      double da = 0.0;
      for (int ch = 0; ch < C; ++ch) da += dh[ch] * vj[ch];
      dsr[j] = da;
      dot += a[j] * da;
    }
    for (std::size_t j = 0; j < n; ++j) dsr[j] = a[j] * (dsr[j] - dot) * scale;
    double* dqi = dq.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* kj = c.k.row(j);
      for (int ch = 0; ch < C; ++ch) dqi[ch] += dsr[j] * kj[ch];
    }
  });
  parallel_for(n, [&](std::size_t j) {
    double* dkj = dk.row(j);
    double* dvj = dv.row(j);
    for (std::size_t i = 0; i < n; ++i) {
      const double sij = ds[i * n + j];
      const double aij = c.attn[i * n + j];
      const double* qi = c.q.row(i);
      const double* dh = d_heads.row(i);
      for (int ch = 0; ch < C; ++ch) {
        dkj[ch] += sij * qi[ch];
        dvj[ch] += aij * dh[ch];
      }
    }
  });

  Features d_tokens = cot_out;
  for (const auto& [proj, grad] : {std::pair{p.query, &dq}, std::pair{p.key, &dk}, std::pair{p.value, &dv}}) {
    const Features dx = linear_backward(tokens, *proj, nullptr, *grad);
    for (std::size_t i = 0; i < dx.data.size(); ++i) d_tokens.data[i] += dx.data[i];
  }
  return d_tokens;
}

}  // namespace ops
}  // namespace evuav
