#pragma once

// Layers and the named-parameter store the model is assembled from. Layers
// hold Tensor handles aliased with the store, so optimizer updates and
// checkpoint loads (both of which write parameter data in place) are seen by
// the layers without any rebinding.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "jscc/error.hpp"
#include "jscc/rng.hpp"
#include "jscc/tensor.hpp"

namespace jscc {

template <typename S>
class ParameterStore {
public:
    struct Entry {
        std::string name;
        std::string group;
        Tensor<S> tensor;
    };

    Tensor<S>& create(const std::string& name, const std::string& group, Tensor<S> init) {
        auto it = index_.find(name);
        if (it != index_.end()) {
            throw ConfigError("parameter '" + name + "' already registered");
        }
        index_[name] = entries_.size();
        entries_.push_back({name, group, std::move(init)});
        return entries_.back().tensor;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<S>& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return entries_[it->second].tensor;
    }
    const Tensor<S>& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return entries_[it->second].tensor;
    }

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& mutable_entries() { return entries_; }

    std::vector<std::string> group_names() const {
        std::set<std::string> seen;
        std::vector<std::string> out;
        for (const auto& e : entries_) {
            if (seen.insert(e.group).second) out.push_back(e.group);
        }
        return out;
    }

    void set_group_frozen(const std::string& group, bool frozen) {
        if (frozen) {
            frozen_.insert(group);
        } else {
            frozen_.erase(group);
        }
        for (auto& e : entries_) {
            if (e.group == group) e.tensor.set_requires_grad(!frozen);
        }
    }

    void freeze_all() {
        for (const auto& g : group_names()) set_group_frozen(g, true);
    }

    void unfreeze_all() {
        for (const auto& g : group_names()) set_group_frozen(g, false);
    }

    bool group_frozen(const std::string& group) const { return frozen_.count(group) != 0; }

    std::size_t total_parameters() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.tensor.numel();
        return n;
    }

    // Copies values (in place) for every name present in both stores. Shape
    // conflicts are errors; names unique to either side are left alone.
    void copy_common_from(const ParameterStore& other) {
        for (const auto& e : other.entries_) {
            auto it = index_.find(e.name);
            if (it == index_.end()) continue;
            Tensor<S>& mine = entries_[it->second].tensor;
            if (mine.shape() != e.tensor.shape()) {
                throw ShapeError("parameter '" + e.name + "' shape " +
                                 shape_str(mine.shape()) + " vs donor " +
                                 shape_str(e.tensor.shape()));
            }
            mine.mutable_values() = e.tensor.values();
        }
    }

    void copy_all_from(const ParameterStore& other) {
        if (other.entries_.size() != entries_.size()) {
            throw ConfigError("store copy: parameter counts differ");
        }
        copy_common_from(other);
    }

    bool group_bitwise_equal(const ParameterStore& other, const std::string& group) const {
        for (const auto& e : entries_) {
            if (e.group != group) continue;
            if (!other.has(e.name)) return false;
            if (other.get(e.name).values() != e.tensor.values()) return false;
        }
        return true;
    }

    bool bitwise_equal(const ParameterStore& other) const {
        if (entries_.size() != other.entries_.size()) return false;
        for (const auto& e : entries_) {
            if (!other.has(e.name)) return false;
            if (other.get(e.name).values() != e.tensor.values()) return false;
        }
        return true;
    }

    void zero_grads() {
        for (auto& e : entries_) e.tensor.zero_grad();
    }

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
    std::set<std::string> frozen_;
};

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

enum class Init { kUniformFanIn, kZero };

template <typename S>
Tensor<S> init_tensor(Shape shape, Init kind, std::size_t fan_in, Rng& rng) {
    switch (kind) {
        case Init::kZero:
            return Tensor<S>::zeros(std::move(shape));
        case Init::kUniformFanIn: {
            const double k = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
            return Tensor<S>::uniform(std::move(shape), rng, -k, k);
        }
    }
    throw ConfigError("unknown init kind");
}

template <typename S>
struct Linear {
    Tensor<S> w;  // (in, out)
    Tensor<S> b;  // (out)

    Linear() = default;
    Linear(ParameterStore<S>& store, const std::string& prefix, const std::string& group,
           std::size_t in, std::size_t out, Rng& rng, Init weight_init = Init::kUniformFanIn,
           Init bias_init = Init::kUniformFanIn) {
        w = store.create(prefix + ".w", group, init_tensor<S>({in, out}, weight_init, in, rng));
        b = store.create(prefix + ".b", group, init_tensor<S>({out}, bias_init, in, rng));
    }

    Tensor<S> operator()(const Tensor<S>& x) const { return add(matmul(x, w), b); }
};

template <typename S>
struct LayerNorm {
    Tensor<S> gain;
    Tensor<S> bias;

    LayerNorm() = default;
    LayerNorm(ParameterStore<S>& store, const std::string& prefix, const std::string& group,
              std::size_t width) {
        gain = store.create(prefix + ".g", group, Tensor<S>::ones({width}));
        bias = store.create(prefix + ".b", group, Tensor<S>::zeros({width}));
    }

    Tensor<S> operator()(const Tensor<S>& x) const { return layer_norm(x, gain, bias); }
};

// Token-wise residual MLP: x + W2 gelu(W1 ln(x)).
template <typename S>
struct ResidualMlp {
    LayerNorm<S> ln;
    Linear<S> fc1, fc2;

    ResidualMlp() = default;
    ResidualMlp(ParameterStore<S>& store, const std::string& prefix, const std::string& group,
                std::size_t width, std::size_t hidden, Rng& rng,
                Init out_init = Init::kUniformFanIn)
        : ln(store, prefix + ".ln", group, width),
          fc1(store, prefix + ".fc1", group, width, hidden, rng),
          fc2(store, prefix + ".fc2", group, hidden, width, rng, out_init, out_init) {}

    Tensor<S> operator()(const Tensor<S>& x) const {
        return add(x, fc2(gelu(fc1(ln(x)))));
    }
};

// Pre-norm transformer block. With zero-initialized output projections the
// block is an exact identity, which keeps a freshly added adaptor transparent
// at the start of fine-tuning.
template <typename S>
struct TransformerBlock {
    LayerNorm<S> ln1, ln2;
    Linear<S> wq, wk, wv, wo;
    Linear<S> fc1, fc2;
    std::size_t heads = 1;

    TransformerBlock() = default;
    TransformerBlock(ParameterStore<S>& store, const std::string& prefix,
                     const std::string& group, std::size_t width, std::size_t mlp_hidden,
                     std::size_t n_heads, Rng& rng, bool identity_residuals)
        : ln1(store, prefix + ".ln1", group, width),
          ln2(store, prefix + ".ln2", group, width),
          wq(store, prefix + ".wq", group, width, width, rng),
          wk(store, prefix + ".wk", group, width, width, rng),
          wv(store, prefix + ".wv", group, width, width, rng),
          wo(store, prefix + ".wo", group, width, width, rng,
             identity_residuals ? Init::kZero : Init::kUniformFanIn,
             identity_residuals ? Init::kZero : Init::kUniformFanIn),
          fc1(store, prefix + ".fc1", group, width, mlp_hidden, rng),
          fc2(store, prefix + ".fc2", group, mlp_hidden, width, rng,
              identity_residuals ? Init::kZero : Init::kUniformFanIn,
              identity_residuals ? Init::kZero : Init::kUniformFanIn),
          heads(n_heads) {}

    Tensor<S> operator()(const Tensor<S>& x) const {
        Tensor<S> n = ln1(x);
        Tensor<S> att = multi_head_attention(wq(n), wk(n), wv(n), heads);
        Tensor<S> y = add(x, wo(att));
        Tensor<S> m = ln2(y);
        return add(y, fc2(gelu(fc1(m))));
    }
};

}  // namespace jscc
