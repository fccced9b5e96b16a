#pragma once

// The transmission network: SNR-adaptive semantic codec, split channel
// sub-codecs, and the channel-matrix adaptor that conditions per-antenna
// feature tokens on a token projected from the estimated channel matrix. The
// adaptor sits between the two sub-codecs on both the transmit and receive
// side, with independent parameters per side.

#include <cstdint>
#include <string>
#include <vector>

#include "jscc/channel.hpp"
#include "jscc/complex_matrix.hpp"
#include "jscc/nn.hpp"
#include "jscc/tensor.hpp"

namespace jscc {

enum class Variant { kHana, kNoAdaptor };
enum class Side { kTx, kRx };

inline const char* variant_name(Variant v) {
    return v == Variant::kHana ? "HANA" : "NO_ADAPTOR";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "HANA") return Variant::kHana;
    if (s == "NO_ADAPTOR") return Variant::kNoAdaptor;
    throw ConfigError("unknown variant '" + s + "'");
}

struct ModelConfig {
    std::size_t n_tx = 16;
    std::size_t n_rx = 16;
    std::size_t d = 16;        // complex symbols per antenna
    std::size_t d_prime = 64;  // adaptor token width
    std::size_t n_blocks = 6;  // adaptor transformer depth
    std::size_t heads = 4;
    std::size_t c = 3, h = 32, w = 32;  // image dims
    std::size_t c_prime = 48;           // semantic feature channels
    std::size_t base_width = 16;        // first semantic stage token width
    std::size_t snr_hidden = 16;
    double compression_ratio = 0.0;  // 0 = unchecked; else n_tx*d must equal CR*c*h*w
    bool channel_activations = true;

    // Three 2x downsampling stages: patch embed + two merges.
    std::size_t h_prime() const { return h / 8; }
    std::size_t w_prime() const { return w / 8; }
    std::size_t semantic_elems() const { return c_prime * h_prime() * w_prime(); }

    void validate() const {
        if (n_tx == 0 || n_rx == 0 || d == 0) throw ConfigError("antenna/symbol counts must be positive");
        if (h % 8 != 0 || w % 8 != 0) {
            throw ConfigError("image height/width must be divisible by 8, got " +
                              std::to_string(h) + "x" + std::to_string(w));
        }
        if (d_prime % heads != 0) {
            throw ConfigError("d_prime " + std::to_string(d_prime) + " not divisible by " +
                              std::to_string(heads) + " heads");
        }
        if (compression_ratio > 0.0) {
            const double actual = static_cast<double>(n_tx * d) / static_cast<double>(c * h * w);
            if (std::fabs(actual - compression_ratio) > 1e-9) {
                throw ConfigError("compression ratio mismatch: configured " +
                                  std::to_string(compression_ratio) + ", actual " +
                                  std::to_string(actual));
            }
        }
    }
};

// Adaptor/modulation branches start as exact identities under kStandard;
// kFullyRandom randomizes everything (used by gradient and dead-parameter
// checks, where an exact-zero branch would hide coverage).
enum class InitMode { kStandard, kFullyRandom };

template <typename S>
struct ForwardResult {
    Tensor<S> x_hat;       // (c, h, w), in [0,1]
    Tensor<S> z_c;         // transmitted symbols, bridge layout (n_tx, 2d), unit power
    Tensor<S> z_s_hat;     // recovered semantic features (c', h', w')
    Tensor<S> z_s;         // transmitted semantic features (c', h', w')
};

template <typename S>
class Model {
public:
    Model(ModelConfig cfg, std::uint64_t init_seed, InitMode mode = InitMode::kStandard)
        : cfg_(cfg) {
        cfg_.validate();
        Rng rng(derive_seed(init_seed, "model.init"));
        const bool identity = (mode == InitMode::kStandard);
        const std::size_t cp = cfg_.c_prime;
        const std::size_t bw = cfg_.base_width;

        // semantic encoder
        enc_patch_ = Linear<S>(store_, "enc.patch", "semantic_enc", cfg_.c * 4, bw, rng);
        enc_mlp1_ = ResidualMlp<S>(store_, "enc.mlp1", "semantic_enc", bw, 2 * bw, rng);
        enc_stage2_ = Linear<S>(store_, "enc.stage2", "semantic_enc", 4 * bw, 2 * bw, rng);
        enc_mlp2_ = ResidualMlp<S>(store_, "enc.mlp2", "semantic_enc", 2 * bw, 4 * bw, rng);
        enc_stage3_ = Linear<S>(store_, "enc.stage3", "semantic_enc", 8 * bw, cp, rng);
        enc_mlp3_ = ResidualMlp<S>(store_, "enc.mlp3", "semantic_enc", cp, 2 * cp, rng);
        enc_snr_ = make_snr_net("enc.snr", "semantic_enc", cp, rng, identity);

        // semantic decoder
        dec_snr_ = make_snr_net("dec.snr", "semantic_dec", cp, rng, identity);
        dec_mlp3_ = ResidualMlp<S>(store_, "dec.mlp3", "semantic_dec", cp, 2 * cp, rng);
        dec_stage3_ = Linear<S>(store_, "dec.stage3", "semantic_dec", cp, 8 * bw, rng);
        dec_mlp2_ = ResidualMlp<S>(store_, "dec.mlp2", "semantic_dec", 2 * bw, 4 * bw, rng);
        dec_stage2_ = Linear<S>(store_, "dec.stage2", "semantic_dec", 2 * bw, 4 * bw, rng);
        dec_mlp1_ = ResidualMlp<S>(store_, "dec.mlp1", "semantic_dec", bw, 2 * bw, rng);
        dec_out_ = Linear<S>(store_, "dec.out", "semantic_dec", bw, cfg_.c * 4, rng);

        // channel sub-codecs
        chenc1_ = Linear<S>(store_, "chenc1", "channel_enc", cfg_.semantic_elems(),
                            cfg_.n_tx * cfg_.d_prime, rng);
        chenc2_ = Linear<S>(store_, "chenc2", "channel_enc", cfg_.d_prime, 2 * cfg_.d, rng);
        chdec1_ = Linear<S>(store_, "chdec1", "channel_dec", 2 * cfg_.d, cfg_.d_prime, rng);
        chdec2_ = Linear<S>(store_, "chdec2", "channel_dec", cfg_.n_rx * cfg_.d_prime,
                            cfg_.semantic_elems(), rng);

        // channel matrix adaptors, independent parameters per side
        const std::size_t csi_in = 2 * cfg_.n_rx * cfg_.n_tx;
        csi_tx_ = Linear<S>(store_, "cma_tx.csi", "adaptor_tx", csi_in, cfg_.d_prime, rng,
                            Init::kUniformFanIn, Init::kZero);
        csi_rx_ = Linear<S>(store_, "cma_rx.csi", "adaptor_rx", csi_in, cfg_.d_prime, rng,
                            Init::kUniformFanIn, Init::kZero);
        for (std::size_t i = 0; i < cfg_.n_blocks; ++i) {
            blocks_tx_.emplace_back(store_, "cma_tx.block" + std::to_string(i), "adaptor_tx",
                                    cfg_.d_prime, 4 * cfg_.d_prime, cfg_.heads, rng, identity);
            blocks_rx_.emplace_back(store_, "cma_rx.block" + std::to_string(i), "adaptor_rx",
                                    cfg_.d_prime, 4 * cfg_.d_prime, cfg_.heads, rng, identity);
        }

        build_index_maps();
    }

    const ModelConfig& config() const { return cfg_; }
    ParameterStore<S>& store() { return store_; }
    const ParameterStore<S>& store() const { return store_; }

    // E_S: (c,h,w) image in [0,1] -> (c',h',w') features, SNR-conditioned.
    Tensor<S> semantic_encode(const Tensor<S>& x, double snr_db) const {
        if (x.shape() != Shape{cfg_.c, cfg_.h, cfg_.w}) {
            throw ShapeError("semantic_encode: expected " +
                             shape_str({cfg_.c, cfg_.h, cfg_.w}) + ", got " +
                             shape_str(x.shape()));
        }
        for (S v : x.values()) {
            if (v < S(0) || v > S(1)) {
                throw DomainError("semantic_encode: input values must lie in [0,1]");
            }
        }
        const std::size_t t1 = (cfg_.h / 2) * (cfg_.w / 2);
        Tensor<S> t = gather_elements(x, patchify_, {t1, cfg_.c * 4});
        t = gelu(enc_patch_(t));
        t = enc_mlp1_(t);
        t = gather_elements(t, merge1_, {t1 / 4, 4 * cfg_.base_width});
        t = gelu(enc_stage2_(t));
        t = enc_mlp2_(t);
        t = gather_elements(t, merge2_, {t1 / 16, 8 * cfg_.base_width});
        t = gelu(enc_stage3_(t));
        t = enc_mlp3_(t);
        t = snr_modulate(t, snr_db, Side::kTx);
        return gather_elements(t, tokens_to_chw_,
                               {cfg_.c_prime, cfg_.h_prime(), cfg_.w_prime()});
    }

    // Per-channel affine modulation (scale, shift) produced from the SNR.
    // Zero-initialized nets emit (1, 0), i.e. the identity.
    Tensor<S> snr_modulate(const Tensor<S>& tokens, double snr_db, Side side) const {
        const SnrNet& net = (side == Side::kTx) ? enc_snr_ : dec_snr_;
        const std::size_t width = tokens.shape().back();
        if (width != cfg_.c_prime) {
            throw ShapeError("snr_modulate: token width " + std::to_string(width) +
                             " does not match c' = " + std::to_string(cfg_.c_prime));
        }
        Tensor<S> snr = Tensor<S>::full({1, 1}, static_cast<S>((snr_db - 5.0) / 10.0));
        Tensor<S> hidden = gelu(net.fc1(snr));
        Tensor<S> mods = net.fc2(hidden);  // (1, 2c')
        Tensor<S> scale_raw = reshape(slice_cols(mods, 0, width), {width});
        Tensor<S> shift = reshape(slice_cols(mods, width, 2 * width), {width});
        Tensor<S> scale_v = add(scale_raw, Tensor<S>::ones({width}));
        return add(mul(tokens, scale_v), shift);
    }

    // E_C,1: (c',h',w') -> (n_tx, d') per-antenna tokens.
    Tensor<S> channel_encode_1(const Tensor<S>& z_s) const {
        if (z_s.shape() != Shape{cfg_.c_prime, cfg_.h_prime(), cfg_.w_prime()}) {
            throw ShapeError("channel_encode_1: expected " +
                             shape_str({cfg_.c_prime, cfg_.h_prime(), cfg_.w_prime()}) +
                             ", got " + shape_str(z_s.shape()));
        }
        Tensor<S> flat = reshape(z_s, {1, cfg_.semantic_elems()});
        Tensor<S> t = chenc1_(flat);
        if (cfg_.channel_activations) t = gelu(t);
        return reshape(t, {cfg_.n_tx, cfg_.d_prime});
    }

    // FC projection of the flattened estimated channel matrix to one token.
    Tensor<S> csi_tokenize(const ComplexMatrix& h_est, Side side) const {
        const Linear<S>& proj = (side == Side::kTx) ? csi_tx_ : csi_rx_;
        Tensor<S> flat(Shape{1, 2 * h_est.rows() * h_est.cols()});
        auto& v = flat.mutable_values();
        const std::size_t n = h_est.size();
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = static_cast<S>(h_est.re_data()[i]);
            v[n + i] = static_cast<S>(h_est.im_data()[i]);
        }
        return proj(flat);  // (1, d')
    }

    // Prepend CSI token, run the transformer stack, drop the token.
    Tensor<S> cma_apply(const Tensor<S>& tokens, const ComplexMatrix& h_est, Side side) const {
        const std::size_t expected = (side == Side::kTx) ? cfg_.n_tx : cfg_.n_rx;
        if (tokens.rank() != 2 || tokens.dim(0) != expected || tokens.dim(1) != cfg_.d_prime) {
            throw ShapeError("cma_apply: expected " + shape_str({expected, cfg_.d_prime}) +
                             ", got " + shape_str(tokens.shape()));
        }
        Tensor<S> seq = concat_rows(csi_tokenize(h_est, side), tokens);
        const auto& blocks = (side == Side::kTx) ? blocks_tx_ : blocks_rx_;
        for (const auto& block : blocks) seq = block(seq);
        return slice_rows(seq, 1, expected + 1);
    }

    // E_C,2: (n_tx, d') -> power-normalized (n_tx, d) complex symbols in
    // bridge layout (n_tx, 2d).
    Tensor<S> channel_encode_2(const Tensor<S>& t) const {
        if (t.rank() != 2 || t.dim(0) != cfg_.n_tx || t.dim(1) != cfg_.d_prime) {
            throw ShapeError("channel_encode_2: expected " +
                             shape_str({cfg_.n_tx, cfg_.d_prime}) + ", got " +
                             shape_str(t.shape()));
        }
        return power_normalize_bridge(chenc2_(t));
    }

    Tensor<S> channel_decode_1(const Tensor<S>& z_hat_bridge) const {
        if (z_hat_bridge.rank() != 2 || z_hat_bridge.dim(0) != cfg_.n_rx ||
            z_hat_bridge.dim(1) != 2 * cfg_.d) {
            throw ShapeError("channel_decode_1: expected " +
                             shape_str({cfg_.n_rx, 2 * cfg_.d}) + ", got " +
                             shape_str(z_hat_bridge.shape()));
        }
        Tensor<S> t = chdec1_(z_hat_bridge);
        if (cfg_.channel_activations) t = gelu(t);
        return t;  // (n_rx, d')
    }

    Tensor<S> channel_decode_2(const Tensor<S>& t) const {
        Tensor<S> flat = reshape(t, {1, cfg_.n_rx * cfg_.d_prime});
        return reshape(chdec2_(flat), {cfg_.c_prime, cfg_.h_prime(), cfg_.w_prime()});
    }

    // D_C,2 . D_CMA . D_C,1
    Tensor<S> channel_decode(const Tensor<S>& z_hat_bridge, const ComplexMatrix& h_est,
                             Variant variant) const {
        Tensor<S> t = channel_decode_1(z_hat_bridge);
        if (variant == Variant::kHana) t = cma_apply(t, h_est, Side::kRx);
        return channel_decode_2(t);
    }

    // D_S: (c',h',w') -> (c,h,w) clamped to [0,1] by the output sigmoid.
    Tensor<S> semantic_decode(const Tensor<S>& z_s_hat, double snr_db) const {
        if (z_s_hat.shape() != Shape{cfg_.c_prime, cfg_.h_prime(), cfg_.w_prime()}) {
            throw ShapeError("semantic_decode: expected " +
                             shape_str({cfg_.c_prime, cfg_.h_prime(), cfg_.w_prime()}) +
                             ", got " + shape_str(z_s_hat.shape()));
        }
        const std::size_t t3 = cfg_.h_prime() * cfg_.w_prime();
        Tensor<S> t = gather_elements(z_s_hat, chw_to_tokens_, {t3, cfg_.c_prime});
        t = snr_modulate(t, snr_db, Side::kRx);
        t = dec_mlp3_(t);
        t = gelu(dec_stage3_(t));
        t = gather_elements(t, split2_, {t3 * 4, 2 * cfg_.base_width});
        t = dec_mlp2_(t);
        t = gelu(dec_stage2_(t));
        t = gather_elements(t, split1_, {t3 * 16, cfg_.base_width});
        t = dec_mlp1_(t);
        t = dec_out_(t);
        Tensor<S> img = gather_elements(t, unpatchify_, {cfg_.c, cfg_.h, cfg_.w});
        return sigmoid(img);
    }

    // Full pipeline over one channel realization with frozen noise.
    ForwardResult<S> forward(const Tensor<S>& x, const ChannelRealization& r,
                             const ComplexMatrix& noise, Variant variant) const {
        if (r.h_p.rows() != cfg_.n_rx || r.h_p.cols() != cfg_.n_tx) {
            throw ShapeError("forward: channel is " + std::to_string(r.h_p.rows()) + "x" +
                             std::to_string(r.h_p.cols()) + ", model expects " +
                             std::to_string(cfg_.n_rx) + "x" + std::to_string(cfg_.n_tx));
        }
        ForwardResult<S> out;
        out.z_s = semantic_encode(x, r.snr_db);
        Tensor<S> t = channel_encode_1(out.z_s);
        if (variant == Variant::kHana) t = cma_apply(t, r.h_est, Side::kTx);
        out.z_c = channel_encode_2(t);

        auto est = svd(r.h_est);
        Tensor<S> z = complex_left_multiply(est->v, out.z_c);
        Tensor<S> z_hat = transmit_bridge(z, r.h_p, noise);
        Tensor<S> z_tilde = complex_left_multiply(est->u.hermitian(), z_hat);

        out.z_s_hat = channel_decode(z_tilde, r.h_est, variant);
        out.x_hat = semantic_decode(out.z_s_hat, r.snr_db);
        return out;
    }

private:
    struct SnrNet {
        Linear<S> fc1, fc2;
    };

    SnrNet make_snr_net(const std::string& prefix, const std::string& group, std::size_t width,
                        Rng& rng, bool identity) {
        SnrNet net;
        net.fc1 = Linear<S>(store_, prefix + ".fc1", group, 1, cfg_.snr_hidden, rng);
        net.fc2 = Linear<S>(store_, prefix + ".fc2", group, cfg_.snr_hidden, 2 * width, rng,
                            identity ? Init::kZero : Init::kUniformFanIn,
                            identity ? Init::kZero : Init::kUniformFanIn);
        return net;
    }

    void build_index_maps() {
        const std::size_t c = cfg_.c, h = cfg_.h, w = cfg_.w;
        const std::size_t gh1 = h / 2, gw1 = w / 2;

        // image (c,h,w) -> patch tokens (gh1*gw1, c*4), 2x2 patches
        patchify_.resize(gh1 * gw1 * c * 4);
        for (std::size_t py = 0; py < gh1; ++py)
            for (std::size_t px = 0; px < gw1; ++px)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t tok = py * gw1 + px;
                            const std::size_t f = ch * 4 + dy * 2 + dx;
                            patchify_[tok * c * 4 + f] =
                                (ch * h + py * 2 + dy) * w + px * 2 + dx;
                        }
        unpatchify_ = invert_permutation(patchify_);

        merge1_ = merge_index(gh1, gw1, cfg_.base_width);
        split1_ = invert_permutation(merge1_);
        merge2_ = merge_index(gh1 / 2, gw1 / 2, 2 * cfg_.base_width);
        split2_ = invert_permutation(merge2_);

        // tokens (h'*w', c') -> (c', h', w')
        const std::size_t hp = cfg_.h_prime(), wp = cfg_.w_prime(), cp = cfg_.c_prime;
        tokens_to_chw_.resize(cp * hp * wp);
        for (std::size_t ch = 0; ch < cp; ++ch)
            for (std::size_t y = 0; y < hp; ++y)
                for (std::size_t x = 0; x < wp; ++x)
                    tokens_to_chw_[(ch * hp + y) * wp + x] = (y * wp + x) * cp + ch;
        chw_to_tokens_ = invert_permutation(tokens_to_chw_);
    }

    // (gh*gw, dim) tokens -> (gh/2 * gw/2, 4*dim), concatenating 2x2 neighbors
    static std::vector<std::size_t> merge_index(std::size_t gh, std::size_t gw,
                                                std::size_t dim) {
        std::vector<std::size_t> idx(gh * gw * dim);
        const std::size_t oh = gh / 2, ow = gw / 2;
        for (std::size_t qy = 0; qy < oh; ++qy)
            for (std::size_t qx = 0; qx < ow; ++qx)
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx)
                        for (std::size_t j = 0; j < dim; ++j) {
                            const std::size_t out_pos =
                                (qy * ow + qx) * 4 * dim + (dy * 2 + dx) * dim + j;
                            idx[out_pos] = ((qy * 2 + dy) * gw + qx * 2 + dx) * dim + j;
                        }
        return idx;
    }

    static std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& p) {
        std::vector<std::size_t> inv(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
        return inv;
    }

    ModelConfig cfg_;
    ParameterStore<S> store_;

    Linear<S> enc_patch_, enc_stage2_, enc_stage3_;
    ResidualMlp<S> enc_mlp1_, enc_mlp2_, enc_mlp3_;
    SnrNet enc_snr_, dec_snr_;
    ResidualMlp<S> dec_mlp1_, dec_mlp2_, dec_mlp3_;
    Linear<S> dec_stage2_, dec_stage3_, dec_out_;
    Linear<S> chenc1_, chenc2_, chdec1_, chdec2_;
    Linear<S> csi_tx_, csi_rx_;
    std::vector<TransformerBlock<S>> blocks_tx_, blocks_rx_;

    std::vector<std::size_t> patchify_, unpatchify_;
    std::vector<std::size_t> merge1_, split1_, merge2_, split2_;
    std::vector<std::size_t> tokens_to_chw_, chw_to_tokens_;
};

}  // namespace jscc
