#pragma once

#include <algorithm>

#include "jscc/tensor.hpp"

namespace jscc {

// Mean absolute error. Subgradient at zero is 0.
template <typename S>
Tensor<S> l1_loss(const Tensor<S>& x_hat, const Tensor<S>& x) {
    if (x_hat.shape() != x.shape()) {
        throw ShapeError("l1_loss: shapes " + shape_str(x_hat.shape()) + " and " +
                         shape_str(x.shape()) + " differ");
    }
    return mean(abs(sub(x_hat, x)));
}

// Numerically stable log softmax over the flattened tensor; the max shift is
// a constant, so gradients are exact by shift invariance.
template <typename S>
Tensor<S> log_softmax_flat(const Tensor<S>& x) {
    Tensor<S> flat = reshape(x, {x.numel()});
    S mx = flat.values()[0];
    for (S v : flat.values()) mx = std::max(mx, v);
    Tensor<S> shifted = sub(flat, Tensor<S>::full({1}, mx));
    Tensor<S> lse = log(sum(exp(shifted)));
    return sub(shifted, lse);
}

// D_KL(first || second) after flattening each feature tensor into a
// temperature-1 softmax distribution.
template <typename S>
Tensor<S> kl_softmax(const Tensor<S>& first, const Tensor<S>& second) {
    if (first.numel() != second.numel()) {
        throw ShapeError("kl_softmax: feature sizes " + std::to_string(first.numel()) +
                         " and " + std::to_string(second.numel()) + " differ");
    }
    Tensor<S> ls_a = log_softmax_flat(first);
    Tensor<S> ls_b = log_softmax_flat(second);
    return sum(mul(exp(ls_a), sub(ls_a, ls_b)));
}

template <typename S>
struct FeaturePair {
    Tensor<S> z_c;      // bridge representation of the transmitted symbols
    Tensor<S> z_s_hat;  // recovered semantic features
};

template <typename S>
struct LossParts {
    Tensor<S> total;
    double l1 = 0.0;
    double kl = 0.0;
};

// Stage-II objective: L1 reconstruction plus beta-weighted KL terms between
// student and teacher features. Operand order is student-first;
// teacher_first flips it to the conventional distillation order for
// ablations. Teacher features must be detached by the caller (no gradient).
template <typename S>
LossParts<S> kd_loss(const Tensor<S>& x_hat, const Tensor<S>& x,
                     const FeaturePair<S>& student, const FeaturePair<S>& teacher,
                     double beta, bool teacher_first = false) {
    if (beta < 0.0) throw DomainError("kd_loss: beta must be nonnegative");
    LossParts<S> parts;
    Tensor<S> l1 = l1_loss(x_hat, x);
    parts.l1 = static_cast<double>(l1.item());
    if (beta == 0.0) {
        parts.total = l1;
        parts.kl = 0.0;
        return parts;
    }
    Tensor<S> kl_c = teacher_first ? kl_softmax(teacher.z_c, student.z_c)
                                   : kl_softmax(student.z_c, teacher.z_c);
    Tensor<S> kl_s = teacher_first ? kl_softmax(teacher.z_s_hat, student.z_s_hat)
                                   : kl_softmax(student.z_s_hat, teacher.z_s_hat);
    Tensor<S> kl = add(kl_c, kl_s);
    parts.kl = static_cast<double>(kl.item());
    parts.total = add(l1, scale(kl, beta));
    return parts;
}

}  // namespace jscc
