#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "murmurforge/linalg.hpp"
#include "murmurforge/rng.hpp"

namespace murmurforge {

enum class NnArch { Cnn, Fnn };
enum class LossMode { CrossEntropy, MseScalar };

/// Three conv blocks (conv -> ReLU -> max pool), one dropout, then the
/// dense head. Lengths follow L -> (L + 2*pool_padding - pool_kernel) /
/// pool_stride + 1 per block; with the defaults the trace is
/// 168 -> 85 -> 43 -> 22 and the flattened width is 64 * 22 = 1408.
struct CnnConfig {
    int input_length = 168;
    int input_channels = 1;
    std::array<int, 3> conv_channels{16, 32, 64};
    int kernel = 3;
    int padding = 1;
    int pool_kernel = 2;
    int pool_padding = 1;
    int pool_stride = 2;
    double dropout = 0.5;
    std::array<int, 2> fc_widths{128, 128};
    int out_width = 2;
};

struct FnnConfig {
    int input_length = 168;
    std::vector<int> hidden_widths{128, 128};
    double dropout = 0.5;
    int out_width = 2;
};

struct TrainConfig {
    int batch_size = 3000;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs = 100;
    std::uint64_t seed = 0;
    LossMode loss = LossMode::CrossEntropy;
};

/// Named contiguous range of the packed parameter vector ("conv1.w",
/// "fc2.b", ...).
struct ParamSlice {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// Per-batch activations kept by a training-mode forward pass so the
/// backward pass can consume them.
struct ForwardCache {
    std::size_t batch = 0;
    std::vector<std::vector<double>> conv_in;   // per conv: batch * in_ch * L
    std::vector<std::vector<double>> conv_z;    // per conv: pre-ReLU
    std::vector<std::vector<int>> pool_arg;     // per conv: source index per pooled slot
    std::vector<std::vector<double>> pool_out;  // per conv: batch * out_ch * Lp
    std::vector<double> dropout_mask;           // scale per kept element, 0 if dropped
    std::vector<std::vector<double>> dense_in;  // per dense layer
    std::vector<std::vector<double>> dense_z;   // per dense layer (logits for the last)
};

class NnModel {
public:
    static NnModel init(const CnnConfig& cfg, std::uint64_t seed) {
        NnModel m = skeleton(cfg);
        m.kaiming_init(seed);
        return m;
    }
    static NnModel init(const FnnConfig& cfg, std::uint64_t seed) {
        NnModel m = skeleton(cfg);
        m.kaiming_init(seed);
        return m;
    }
    static NnModel zeros(const CnnConfig& cfg) { return skeleton(cfg); }
    static NnModel zeros(const FnnConfig& cfg) { return skeleton(cfg); }

    NnArch arch() const { return arch_; }
    const CnnConfig& cnn_config() const { return ccfg_; }
    const FnnConfig& fnn_config() const { return fcfg_; }
    int input_length() const { return arch_ == NnArch::Cnn ? ccfg_.input_length : fcfg_.input_length; }
    int out_width() const { return arch_ == NnArch::Cnn ? ccfg_.out_width : fcfg_.out_width; }
    double dropout_rate() const { return arch_ == NnArch::Cnn ? ccfg_.dropout : fcfg_.dropout; }

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    std::size_t parameter_count() const { return params_.size(); }
    const std::vector<ParamSlice>& parameter_layout() const { return layout_; }

    /// Signal length entering each conv block plus the final pooled length;
    /// {input_length} for an FNN.
    std::vector<int> activation_lengths() const {
        std::vector<int> lens{input_length()};
        if (arch_ == NnArch::Cnn) {
            int len = ccfg_.input_length;
            for (std::size_t i = 0; i < convs_.size(); ++i) {
                len = conv_out_len(len);
                len = pool_out_len(len);
                lens.push_back(len);
            }
        }
        return lens;
    }

    int flatten_width() const {
        if (arch_ == NnArch::Fnn) return fcfg_.input_length;
        return ccfg_.conv_channels.back() * activation_lengths().back();
    }

    /// Logits for a batch (rows are samples). In training mode dropout is
    /// sampled from rng and activations are recorded in cache; inference
    /// is a pure function of (parameters, input).
    DenseMatrix forward(const DenseMatrix& batch, bool training = false, Rng* rng = nullptr,
                        ForwardCache* cache = nullptr, bool use_dropout = true) const;

    struct LossAndGrad {
        double loss = 0.0;
        std::vector<double> grads;  // aligned with parameters()
    };

    /// Mean loss over the batch and exact gradients for the executed graph,
    /// dropout masks included.
    LossAndGrad loss_and_grad(const DenseMatrix& batch, const std::vector<int>& labels,
                              LossMode mode, Rng* rng, bool use_dropout = true) const;

private:
    static NnModel skeleton(const CnnConfig& cfg);
    static NnModel skeleton(const FnnConfig& cfg);
    void kaiming_init(std::uint64_t seed);

    int conv_out_len(int len) const { return len + 2 * ccfg_.padding - ccfg_.kernel + 1; }
    int pool_out_len(int len) const {
        return (len + 2 * ccfg_.pool_padding - ccfg_.pool_kernel) / ccfg_.pool_stride + 1;
    }

    struct ConvSpec {
        int in_ch, out_ch, in_len;
        std::size_t w_off, b_off;
    };
    struct DenseSpec {
        int in, out;
        std::size_t w_off, b_off;
    };

    NnArch arch_ = NnArch::Fnn;
    CnnConfig ccfg_;
    FnnConfig fcfg_;
    std::vector<ConvSpec> convs_;
    std::vector<DenseSpec> dense_;
    std::vector<double> params_;
    std::vector<ParamSlice> layout_;

    std::size_t add_slice(std::string name, std::size_t size) {
        const std::size_t off = params_.size();
        params_.resize(off + size, 0.0);
        layout_.push_back({std::move(name), off, size});
        return off;
    }
};

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

inline NnModel NnModel::skeleton(const CnnConfig& cfg) {
    if (cfg.input_length < 1 || cfg.input_channels < 1 || cfg.kernel < 1 || cfg.padding < 0 ||
        cfg.pool_kernel < 1 || cfg.pool_padding < 0 || cfg.pool_stride < 1 || cfg.out_width < 1)
        throw std::invalid_argument("CnnConfig: sizes must be positive");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
        throw std::invalid_argument("CnnConfig: dropout must lie in [0, 1)");
    NnModel m;
    m.arch_ = NnArch::Cnn;
    m.ccfg_ = cfg;
    int len = cfg.input_length;
    int in_ch = cfg.input_channels;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        const int out_ch = cfg.conv_channels[i];
        if (out_ch < 1) throw std::invalid_argument("CnnConfig: channel counts must be positive");
        ConvSpec spec;
        spec.in_ch = in_ch;
        spec.out_ch = out_ch;
        spec.in_len = len;
        const std::string tag = "conv" + std::to_string(i + 1);
        spec.w_off = m.add_slice(tag + ".w",
                                 static_cast<std::size_t>(out_ch) * in_ch * cfg.kernel);
        spec.b_off = m.add_slice(tag + ".b", static_cast<std::size_t>(out_ch));
        m.convs_.push_back(spec);
        len = m.conv_out_len(len);
        if (len < 1) throw std::invalid_argument("CnnConfig: conv output collapsed to zero length");
        len = m.pool_out_len(len);
        if (len < 1) throw std::invalid_argument("CnnConfig: pool output collapsed to zero length");
        in_ch = out_ch;
    }
    int width = in_ch * len;
    const std::vector<int> fcs{cfg.fc_widths[0], cfg.fc_widths[1], cfg.out_width};
    for (std::size_t i = 0; i < fcs.size(); ++i) {
        if (fcs[i] < 1) throw std::invalid_argument("CnnConfig: dense widths must be positive");
        DenseSpec spec;
        spec.in = width;
        spec.out = fcs[i];
        const std::string tag = i + 1 == fcs.size() ? "out" : "fc" + std::to_string(i + 1);
        spec.w_off = m.add_slice(tag + ".w", static_cast<std::size_t>(spec.out) * spec.in);
        spec.b_off = m.add_slice(tag + ".b", static_cast<std::size_t>(spec.out));
        m.dense_.push_back(spec);
        width = fcs[i];
    }
    return m;
}

inline NnModel NnModel::skeleton(const FnnConfig& cfg) {
    if (cfg.input_length < 1 || cfg.out_width < 1 || cfg.hidden_widths.empty())
        throw std::invalid_argument("FnnConfig: sizes must be positive");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
        throw std::invalid_argument("FnnConfig: dropout must lie in [0, 1)");
    NnModel m;
    m.arch_ = NnArch::Fnn;
    m.fcfg_ = cfg;
    int width = cfg.input_length;
    std::vector<int> fcs = cfg.hidden_widths;
    fcs.push_back(cfg.out_width);
    for (std::size_t i = 0; i < fcs.size(); ++i) {
        if (fcs[i] < 1) throw std::invalid_argument("FnnConfig: dense widths must be positive");
        DenseSpec spec;
        spec.in = width;
        spec.out = fcs[i];
        const std::string tag = i + 1 == fcs.size() ? "out" : "fc" + std::to_string(i + 1);
        spec.w_off = m.add_slice(tag + ".w", static_cast<std::size_t>(spec.out) * spec.in);
        spec.b_off = m.add_slice(tag + ".b", static_cast<std::size_t>(spec.out));
        m.dense_.push_back(spec);
        width = fcs[i];
    }
    return m;
}

/// Kaiming fan-in initialization for the ReLU stack: weights are
/// N(0, 2/fan_in), biases zero. Draw order is layer order, then element
/// order, so a seed pins every parameter.
inline void NnModel::kaiming_init(std::uint64_t seed) {
    Rng rng(seed);
    for (const auto& c : convs_) {
        const double scale = std::sqrt(2.0 / (static_cast<double>(c.in_ch) * ccfg_.kernel));
        const std::size_t count = static_cast<std::size_t>(c.out_ch) * c.in_ch * ccfg_.kernel;
        for (std::size_t i = 0; i < count; ++i) params_[c.w_off + i] = scale * rng.normal();
    }
    for (const auto& d : dense_) {
        const double scale = std::sqrt(2.0 / static_cast<double>(d.in));
        const std::size_t count = static_cast<std::size_t>(d.out) * d.in;
        for (std::size_t i = 0; i < count; ++i) params_[d.w_off + i] = scale * rng.normal();
    }
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

inline DenseMatrix NnModel::forward(const DenseMatrix& batch, bool training, Rng* rng,
                                    ForwardCache* cache, bool use_dropout) const {
    const std::size_t b = batch.rows();
    if (batch.cols() != static_cast<std::size_t>(input_length()))
        throw std::invalid_argument("forward: batch width " + std::to_string(batch.cols()) +
                                    " != input length " + std::to_string(input_length()));
    const bool drop = training && use_dropout && dropout_rate() > 0.0;
    if (drop && rng == nullptr)
        throw std::invalid_argument("forward: training with dropout requires an rng");

    ForwardCache local;
    ForwardCache& fc = cache ? *cache : local;
    fc = ForwardCache{};
    fc.batch = b;

    std::vector<double> act;  // current activation, flattened sample-major

    if (arch_ == NnArch::Cnn) {
        act.assign(batch.data().begin(), batch.data().end());  // in_ch = 1
        int len = ccfg_.input_length;
        for (std::size_t l = 0; l < convs_.size(); ++l) {
            const ConvSpec& c = convs_[l];
            const int out_len = conv_out_len(len);
            const int pooled_len = pool_out_len(out_len);
            fc.conv_in.push_back(act);

            std::vector<double> z(b * c.out_ch * out_len, 0.0);
            const double* w = params_.data() + c.w_off;
            const double* bias = params_.data() + c.b_off;
            for (std::size_t s = 0; s < b; ++s) {
                const double* in = act.data() + s * c.in_ch * len;
                double* zs = z.data() + s * c.out_ch * out_len;
                for (int oc = 0; oc < c.out_ch; ++oc) {
                    double* zrow = zs + static_cast<std::size_t>(oc) * out_len;
                    for (int t = 0; t < out_len; ++t) zrow[t] = bias[oc];
                    for (int ic = 0; ic < c.in_ch; ++ic) {
                        const double* irow = in + static_cast<std::size_t>(ic) * len;
                        const double* wrow =
                            w + (static_cast<std::size_t>(oc) * c.in_ch + ic) * ccfg_.kernel;
                        for (int dk = 0; dk < ccfg_.kernel; ++dk) {
                            const double wv = wrow[dk];
                            const int shift = dk - ccfg_.padding;
                            const int t0 = std::max(0, -shift);
                            const int t1 = std::min(out_len, len - shift);
                            for (int t = t0; t < t1; ++t) zrow[t] += wv * irow[t + shift];
                        }
                    }
                }
            }
            fc.conv_z.push_back(z);

            // ReLU then max pool; padding slots are ignored, ties go to the
            // lowest index.
            std::vector<double> pooled(b * c.out_ch * pooled_len, 0.0);
            std::vector<int> arg(b * c.out_ch * pooled_len, -1);
            for (std::size_t s = 0; s < b; ++s) {
                for (int oc = 0; oc < c.out_ch; ++oc) {
                    const double* zrow =
                        z.data() + (s * c.out_ch + oc) * static_cast<std::size_t>(out_len);
                    double* prow =
                        pooled.data() + (s * c.out_ch + oc) * static_cast<std::size_t>(pooled_len);
                    int* arow = arg.data() + (s * c.out_ch + oc) * static_cast<std::size_t>(pooled_len);
                    for (int slot = 0; slot < pooled_len; ++slot) {
                        const int start = slot * ccfg_.pool_stride - ccfg_.pool_padding;
                        double best = 0.0;
                        int best_i = -1;
                        for (int k = 0; k < ccfg_.pool_kernel; ++k) {
                            const int idx = start + k;
                            if (idx < 0 || idx >= out_len) continue;
                            const double v = std::max(zrow[idx], 0.0);
                            if (best_i < 0 || v > best) {
                                best = v;
                                best_i = idx;
                            }
                        }
                        prow[slot] = best;
                        arow[slot] = best_i;
                    }
                }
            }
            fc.pool_out.push_back(pooled);
            fc.pool_arg.push_back(std::move(arg));
            act = std::move(pooled);
            len = pooled_len;
        }
        if (drop) {
            const double rate = ccfg_.dropout;
            const double scale = 1.0 / (1.0 - rate);
            fc.dropout_mask.resize(act.size());
            for (std::size_t i = 0; i < act.size(); ++i) {
                const double keep = rng->uniform01() >= rate ? scale : 0.0;
                fc.dropout_mask[i] = keep;
                act[i] *= keep;
            }
        }
    } else {
        act.assign(batch.data().begin(), batch.data().end());
    }

    for (std::size_t l = 0; l < dense_.size(); ++l) {
        const DenseSpec& dspec = dense_[l];
        const bool last = l + 1 == dense_.size();
        // FNN dropout sits between the last hidden ReLU and the output layer.
        if (arch_ == NnArch::Fnn && last && drop) {
            const double rate = fcfg_.dropout;
            const double scale = 1.0 / (1.0 - rate);
            fc.dropout_mask.resize(act.size());
            for (std::size_t i = 0; i < act.size(); ++i) {
                const double keep = rng->uniform01() >= rate ? scale : 0.0;
                fc.dropout_mask[i] = keep;
                act[i] *= keep;
            }
        }
        fc.dense_in.push_back(act);

        std::vector<double> z(b * dspec.out, 0.0);
        const double* w = params_.data() + dspec.w_off;
        const double* bias = params_.data() + dspec.b_off;
        for (std::size_t s = 0; s < b; ++s) {
            const double* in = act.data() + s * dspec.in;
            double* zs = z.data() + s * dspec.out;
            for (int o = 0; o < dspec.out; ++o) {
                const double* wrow = w + static_cast<std::size_t>(o) * dspec.in;
                double sum = bias[o];
                for (int i = 0; i < dspec.in; ++i) sum += wrow[i] * in[i];
                zs[o] = sum;
            }
        }
        fc.dense_z.push_back(z);
        if (!last) {
            for (double& v : z) v = std::max(v, 0.0);
            act = std::move(z);
        } else {
            act = std::move(z);
        }
    }

    DenseMatrix logits(b, dense_.back().out);
    std::copy(act.begin(), act.end(), logits.data().begin());
    if (!logits.all_finite()) throw std::runtime_error("forward: non-finite activation");
    return logits;
}

// ---------------------------------------------------------------------------
// Loss and backward
// ---------------------------------------------------------------------------

inline NnModel::LossAndGrad NnModel::loss_and_grad(const DenseMatrix& batch,
                                                   const std::vector<int>& labels, LossMode mode,
                                                   Rng* rng, bool use_dropout) const {
    const std::size_t b = batch.rows();
    if (labels.size() != b) throw std::invalid_argument("loss_and_grad: label count mismatch");
    if (b == 0) throw std::invalid_argument("loss_and_grad: empty batch");
    const int C = out_width();
    if (mode == LossMode::CrossEntropy) {
        if (C < 2) throw std::invalid_argument("loss_and_grad: cross-entropy needs out_width >= 2");
        for (int y : labels)
            if (y < 0 || y >= C)
                throw std::invalid_argument("loss_and_grad: label " + std::to_string(y) +
                                            " out of range");
    } else if (C != 1) {
        throw std::invalid_argument("loss_and_grad: scalar regression needs out_width == 1");
    }

    ForwardCache fc;
    const DenseMatrix logits = forward(batch, true, rng, &fc, use_dropout);

    LossAndGrad out;
    out.grads.assign(params_.size(), 0.0);

    // dZ at the logits.
    std::vector<double> dz(b * C, 0.0);
    const double invb = 1.0 / static_cast<double>(b);
    if (mode == LossMode::CrossEntropy) {
        for (std::size_t s = 0; s < b; ++s) {
            auto row = logits.row(s);
            double mx = row[0];
            for (int j = 1; j < C; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (int j = 0; j < C; ++j) sum += std::exp(row[j] - mx);
            const double lse = mx + std::log(sum);
            out.loss += (lse - row[labels[s]]) * invb;
            for (int j = 0; j < C; ++j)
                dz[s * C + j] = (std::exp(row[j] - lse) - (j == labels[s] ? 1.0 : 0.0)) * invb;
        }
    } else {
        for (std::size_t s = 0; s < b; ++s) {
            const double diff = logits(s, 0) - static_cast<double>(labels[s]);
            out.loss += diff * diff * invb;
            dz[s] = 2.0 * diff * invb;
        }
    }

    // Dense chain, last to first.
    std::vector<double> dcur = std::move(dz);
    for (std::size_t l = dense_.size(); l-- > 0;) {
        const DenseSpec& dspec = dense_[l];
        const bool last = l + 1 == dense_.size();
        const std::vector<double>& in = fc.dense_in[l];
        double* gw = out.grads.data() + dspec.w_off;
        double* gb = out.grads.data() + dspec.b_off;
        const double* w = params_.data() + dspec.w_off;
        std::vector<double> din(b * dspec.in, 0.0);
        for (std::size_t s = 0; s < b; ++s) {
            const double* irow = in.data() + s * dspec.in;
            const double* drow = dcur.data() + s * dspec.out;
            double* dirow = din.data() + s * dspec.in;
            for (int o = 0; o < dspec.out; ++o) {
                const double g = drow[o];
                if (g == 0.0) continue;
                gb[o] += g;
                double* gwrow = gw + static_cast<std::size_t>(o) * dspec.in;
                const double* wrow = w + static_cast<std::size_t>(o) * dspec.in;
                for (int i = 0; i < dspec.in; ++i) {
                    gwrow[i] += g * irow[i];
                    dirow[i] += g * wrow[i];
                }
            }
        }
        if (arch_ == NnArch::Fnn && last && !fc.dropout_mask.empty())
            for (std::size_t i = 0; i < din.size(); ++i) din[i] *= fc.dropout_mask[i];
        if (l > 0) {
            const std::vector<double>& z_prev = fc.dense_z[l - 1];
            for (std::size_t i = 0; i < din.size(); ++i)
                if (z_prev[i] <= 0.0) din[i] = 0.0;
        }
        dcur = std::move(din);
    }

    if (arch_ == NnArch::Cnn) {
        if (!fc.dropout_mask.empty())
            for (std::size_t i = 0; i < dcur.size(); ++i) dcur[i] *= fc.dropout_mask[i];

        int len_after[4];  // pooled length after each block
        {
            int len = ccfg_.input_length;
            for (std::size_t l = 0; l < convs_.size(); ++l) {
                len = pool_out_len(conv_out_len(len));
                len_after[l] = len;
            }
        }

        for (std::size_t l = convs_.size(); l-- > 0;) {
            const ConvSpec& c = convs_[l];
            const int out_len = conv_out_len(c.in_len);
            const int pooled_len = len_after[l];

            // Pool backward: route each pooled gradient to its argmax, then
            // gate by the ReLU mask of the pre-activation.
            const std::vector<double>& z = fc.conv_z[l];
            std::vector<double> dzc(b * c.out_ch * out_len, 0.0);
            for (std::size_t s = 0; s < b; ++s) {
                for (int oc = 0; oc < c.out_ch; ++oc) {
                    const std::size_t prow = (s * c.out_ch + oc) * static_cast<std::size_t>(pooled_len);
                    const std::size_t zrow = (s * c.out_ch + oc) * static_cast<std::size_t>(out_len);
                    for (int slot = 0; slot < pooled_len; ++slot) {
                        const int src = fc.pool_arg[l][prow + slot];
                        if (src >= 0 && z[zrow + src] > 0.0)
                            dzc[zrow + src] += dcur[prow + slot];
                    }
                }
            }

            const std::vector<double>& in = fc.conv_in[l];
            double* gw = out.grads.data() + c.w_off;
            double* gb = out.grads.data() + c.b_off;
            const double* w = params_.data() + c.w_off;
            std::vector<double> din(b * c.in_ch * c.in_len, 0.0);
            for (std::size_t s = 0; s < b; ++s) {
                const double* irow0 = in.data() + s * c.in_ch * c.in_len;
                const double* drow0 = dzc.data() + s * c.out_ch * out_len;
                double* dirow0 = din.data() + s * c.in_ch * c.in_len;
                for (int oc = 0; oc < c.out_ch; ++oc) {
                    const double* drow = drow0 + static_cast<std::size_t>(oc) * out_len;
                    for (int t = 0; t < out_len; ++t) gb[oc] += drow[t];
                    for (int ic = 0; ic < c.in_ch; ++ic) {
                        const double* irow = irow0 + static_cast<std::size_t>(ic) * c.in_len;
                        double* dirow = dirow0 + static_cast<std::size_t>(ic) * c.in_len;
                        double* gwrow =
                            gw + (static_cast<std::size_t>(oc) * c.in_ch + ic) * ccfg_.kernel;
                        const double* wrow =
                            w + (static_cast<std::size_t>(oc) * c.in_ch + ic) * ccfg_.kernel;
                        for (int dk = 0; dk < ccfg_.kernel; ++dk) {
                            const int shift = dk - ccfg_.padding;
                            const int t0 = std::max(0, -shift);
                            const int t1 = std::min(out_len, c.in_len - shift);
                            double acc = 0.0;
                            const double wv = wrow[dk];
                            for (int t = t0; t < t1; ++t) {
                                acc += drow[t] * irow[t + shift];
                                dirow[t + shift] += wv * drow[t];
                            }
                            gwrow[dk] += acc;
                        }
                    }
                }
            }
            dcur = std::move(din);
        }
    }

    if (!std::isfinite(out.loss)) return out;  // caller decides how to react
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct NnEvalResult {
    double accuracy = 0.0;
    std::vector<int> classes;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

/// Predicted class per row: argmax of logits (first maximum) for
/// classification, rounded-and-clamped output for scalar regression.
inline std::vector<int> nn_predict(const NnModel& model, const DenseMatrix& X, LossMode mode,
                                   int min_label = 0, int max_label = 0) {
    std::vector<int> out(X.rows());
    constexpr std::size_t kChunk = 4096;
    for (std::size_t begin = 0; begin < X.rows(); begin += kChunk) {
        const std::size_t end = std::min(X.rows(), begin + kChunk);
        DenseMatrix chunk(end - begin, X.cols());
        for (std::size_t i = begin; i < end; ++i)
            std::copy(X.row(i).begin(), X.row(i).end(), chunk.row(i - begin).begin());
        const DenseMatrix logits = model.forward(chunk, false, nullptr);
        for (std::size_t i = begin; i < end; ++i) {
            auto row = logits.row(i - begin);
            if (mode == LossMode::CrossEntropy) {
                std::size_t arg = 0;
                for (std::size_t j = 1; j < row.size(); ++j)
                    if (row[j] > row[arg]) arg = j;
                out[i] = static_cast<int>(arg);
            } else {
                const int r = static_cast<int>(std::lround(row[0]));
                out[i] = std::clamp(r, min_label, max_label);
            }
        }
    }
    return out;
}

inline NnEvalResult nn_evaluate(const NnModel& model, const DenseMatrix& X,
                                const std::vector<int>& y, LossMode mode = LossMode::CrossEntropy) {
    if (X.rows() == 0) throw std::invalid_argument("nn_evaluate: empty input");
    if (y.size() != X.rows()) throw std::invalid_argument("nn_evaluate: label count mismatch");

    int min_label = y[0], max_label = y[0];
    for (int v : y) {
        min_label = std::min(min_label, v);
        max_label = std::max(max_label, v);
    }
    const int C = mode == LossMode::CrossEntropy ? model.out_width() : max_label - min_label + 1;
    if (mode == LossMode::CrossEntropy)
        for (int v : y)
            if (v < 0 || v >= C)
                throw std::invalid_argument("nn_evaluate: label out of range");

    NnEvalResult rep;
    for (int c = 0; c < C; ++c)
        rep.classes.push_back(mode == LossMode::CrossEntropy ? c : min_label + c);
    rep.confusion.assign(C, std::vector<std::size_t>(C, 0));

    const auto preds = nn_predict(model, X, mode, min_label, max_label);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < X.rows(); ++i) {
        if (preds[i] == y[i]) ++correct;
        const int t = mode == LossMode::CrossEntropy ? y[i] : y[i] - min_label;
        const int p = mode == LossMode::CrossEntropy ? preds[i] : preds[i] - min_label;
        ++rep.confusion[t][p];
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(X.rows());
    return rep;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct NnEvalSet {
    std::string name;
    DenseMatrix X;
    std::vector<int> y;
};

struct TrainResult {
    std::vector<std::string> eval_names;
    DenseMatrix curves;  // epochs_completed x eval sets, accuracy after each epoch
    double final_loss = 0.0;
    int epochs_completed = 0;
    bool diverged = false;
};

/// Seeded epochs of shuffled mini-batches (the final short batch is kept)
/// with Adam updates and bias correction. Accuracy on every eval set is
/// recorded after each epoch. A non-finite loss aborts training and rolls
/// the model back to the last epoch boundary.
inline TrainResult train(NnModel& model, const DenseMatrix& X, const std::vector<int>& y,
                         const std::vector<NnEvalSet>& evals, const TrainConfig& cfg) {
    if (X.rows() == 0) throw std::invalid_argument("train: empty training set");
    if (y.size() != X.rows()) throw std::invalid_argument("train: label count mismatch");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (cfg.learning_rate <= 0 || cfg.adam_eps <= 0)
        throw std::invalid_argument("train: rates must be positive");
    if (cfg.epochs < 0) throw std::invalid_argument("train: epochs must be non-negative");

    TrainResult result;
    for (const auto& e : evals) result.eval_names.push_back(e.name);
    DenseMatrix curves(cfg.epochs, evals.size());

    Rng rng(cfg.seed);
    std::vector<double> m(model.parameter_count(), 0.0);
    std::vector<double> v(model.parameter_count(), 0.0);
    std::int64_t step = 0;

    std::vector<std::size_t> order(X.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> snapshot(model.parameters().begin(), model.parameters().end());
    double last_loss = 0.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        snapshot.assign(model.parameters().begin(), model.parameters().end());
        rng.shuffle(order);

        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            DenseMatrix batch(end - begin, X.cols());
            std::vector<int> labels(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                std::copy(X.row(order[i]).begin(), X.row(order[i]).end(),
                          batch.row(i - begin).begin());
                labels[i - begin] = y[order[i]];
            }
            const auto lg = model.loss_and_grad(batch, labels, cfg.loss, &rng);
            if (!std::isfinite(lg.loss)) {
                std::copy(snapshot.begin(), snapshot.end(), model.parameters().begin());
                result.diverged = true;
                result.final_loss = last_loss;
                result.epochs_completed = epoch;
                result.curves = DenseMatrix(epoch, evals.size());
                for (int e = 0; e < epoch; ++e)
                    for (std::size_t j = 0; j < evals.size(); ++j)
                        result.curves(e, j) = curves(e, j);
                return result;
            }
            last_loss = lg.loss;

            ++step;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            auto params = model.parameters();
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double g = lg.grads[i];
                m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g;
                v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g * g;
                params[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
            }
        }

        for (std::size_t j = 0; j < evals.size(); ++j)
            curves(epoch, j) =
                evals[j].X.rows() == 0
                    ? 0.0
                    : nn_evaluate(model, evals[j].X, evals[j].y, cfg.loss).accuracy;
        result.epochs_completed = epoch + 1;
    }

    result.curves = std::move(curves);
    result.final_loss = last_loss;
    return result;
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckOptions {
    /// Cap on parameters checked per group; 0 checks every parameter.
    std::size_t max_per_group = 0;
    std::uint64_t sample_seed = 0x9e3779b97f4a7c15ULL;
    /// Harness self-test: corrupt this analytic gradient entry by
    /// inject_delta before comparing, which must be reported as an error.
    std::ptrdiff_t inject_index = -1;
    double inject_delta = 0.0;
};

/// Worst relative disagreement between analytic and central
/// finite-difference gradients (h = 1e-5), dropout disabled. The
/// denominator max(1, |a|, |n|) keeps dead-unit entries from inflating the
/// score.
inline double grad_check(const NnModel& model, const DenseMatrix& batch,
                         const std::vector<int>& labels, LossMode mode,
                         const GradCheckOptions& opts = {}) {
    NnModel work = model;
    auto analytic = work.loss_and_grad(batch, labels, mode, nullptr, false);
    if (opts.inject_index >= 0) analytic.grads[opts.inject_index] += opts.inject_delta;

    const double h = 1e-5;
    Rng rng(opts.sample_seed);
    double worst = 0.0;
    auto params = work.parameters();
    for (const auto& slice : work.parameter_layout()) {
        std::vector<std::size_t> picks;
        if (opts.max_per_group == 0 || slice.size <= opts.max_per_group) {
            picks.resize(slice.size);
            for (std::size_t i = 0; i < slice.size; ++i) picks[i] = i;
        } else {
            std::vector<std::size_t> all(slice.size);
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            for (std::size_t i = 0; i < opts.max_per_group; ++i) {
                const std::size_t j = i + rng.below(all.size() - i);
                std::swap(all[i], all[j]);
            }
            picks.assign(all.begin(), all.begin() + opts.max_per_group);
        }
        for (std::size_t local : picks) {
            const std::size_t idx = slice.offset + local;
            const double saved = params[idx];
            params[idx] = saved + h;
            const double lp = work.loss_and_grad(batch, labels, mode, nullptr, false).loss;
            params[idx] = saved - h;
            const double lm = work.loss_and_grad(batch, labels, mode, nullptr, false).loss;
            params[idx] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic.grads[idx];
            const double rel =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json nn_to_json(const NnModel& model) {
    nlohmann::ordered_json doc;
    doc["format_version"] = 1;
    doc["kind"] = "nn";
    doc["arch"] = model.arch() == NnArch::Cnn ? "cnn" : "fnn";
    nlohmann::ordered_json cfg;
    if (model.arch() == NnArch::Cnn) {
        const CnnConfig& c = model.cnn_config();
        cfg["input_length"] = c.input_length;
        cfg["input_channels"] = c.input_channels;
        cfg["conv_channels"] = c.conv_channels;
        cfg["kernel"] = c.kernel;
        cfg["padding"] = c.padding;
        cfg["pool_kernel"] = c.pool_kernel;
        cfg["pool_padding"] = c.pool_padding;
        cfg["pool_stride"] = c.pool_stride;
        cfg["dropout"] = c.dropout;
        cfg["fc_widths"] = c.fc_widths;
        cfg["out_width"] = c.out_width;
    } else {
        const FnnConfig& f = model.fnn_config();
        cfg["input_length"] = f.input_length;
        cfg["hidden_widths"] = f.hidden_widths;
        cfg["dropout"] = f.dropout;
        cfg["out_width"] = f.out_width;
    }
    doc["config"] = std::move(cfg);
    nlohmann::ordered_json params;
    for (const auto& slice : model.parameter_layout()) {
        auto view = model.parameters().subspan(slice.offset, slice.size);
        params[slice.name] = std::vector<double>(view.begin(), view.end());
    }
    doc["params"] = std::move(params);
    return doc;
}

inline NnModel nn_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("kind", "") != "nn" || doc.value("format_version", 0) != 1)
        throw std::invalid_argument("nn_from_json: not a v1 nn model");
    const auto& cfg = doc.at("config");
    NnModel model = [&] {
        if (doc.at("arch") == "cnn") {
            CnnConfig c;
            c.input_length = cfg.at("input_length").get<int>();
            c.input_channels = cfg.at("input_channels").get<int>();
            c.conv_channels = cfg.at("conv_channels").get<std::array<int, 3>>();
            c.kernel = cfg.at("kernel").get<int>();
            c.padding = cfg.at("padding").get<int>();
            c.pool_kernel = cfg.at("pool_kernel").get<int>();
            c.pool_padding = cfg.at("pool_padding").get<int>();
            c.pool_stride = cfg.at("pool_stride").get<int>();
            c.dropout = cfg.at("dropout").get<double>();
            c.fc_widths = cfg.at("fc_widths").get<std::array<int, 2>>();
            c.out_width = cfg.at("out_width").get<int>();
            return NnModel::zeros(c);
        }
        FnnConfig f;
        f.input_length = cfg.at("input_length").get<int>();
        f.hidden_widths = cfg.at("hidden_widths").get<std::vector<int>>();
        f.dropout = cfg.at("dropout").get<double>();
        f.out_width = cfg.at("out_width").get<int>();
        return NnModel::zeros(f);
    }();

    const auto& params = doc.at("params");
    for (const auto& slice : model.parameter_layout()) {
        const auto values = params.at(slice.name).get<std::vector<double>>();
        if (values.size() != slice.size)
            throw std::invalid_argument("nn_from_json: bad size for " + slice.name);
        std::copy(values.begin(), values.end(),
                  model.parameters().begin() + static_cast<std::ptrdiff_t>(slice.offset));
    }
    return model;
}

} // namespace murmurforge
