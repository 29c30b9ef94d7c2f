#pragma once

/// @file selector.hpp
/// Self-paced, multi-model selection of unlabeled images.
///
/// For model j the V-dependent part of the objective is
///
///     sum_{i,c} v[i][c] * (L[j][i][c] - lambda[j][c])
///   - sum_{k != j} gamma[j][k] * <V_j, V_k>
///
/// subject to binary entries and at most one selected class per image. With
/// the adjusted loss A = L[j] - sum_k gamma[j][k] * V_k this is a separable
/// per-image problem: pick the class with the most negative A - lambda, or
/// nothing when every margin is non-negative.
///
/// The pace parameter lambda is carried in count form: a per-class target
/// R[c] of images to select. `update_v` picks the R[c] smallest finite
/// adjusted losses of each class and reports the lambda that this selection
/// corresponds to (the R[c]-th smallest value).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mspld/error.hpp"

namespace mspld {

struct SelectionMatrix {
    int model_id = 0;
    int num_images = 0;
    int num_classes = 0;
    std::vector<std::uint8_t> v;  // row-major num_images x num_classes

    SelectionMatrix() = default;
    SelectionMatrix(int model, int images, int classes)
        : model_id(model), num_images(images), num_classes(classes),
          v(static_cast<std::size_t>(images) * classes, 0) {}

    std::uint8_t at(int i, int c) const { return v[static_cast<std::size_t>(i) * num_classes + c]; }
    std::uint8_t& at(int i, int c) { return v[static_cast<std::size_t>(i) * num_classes + c]; }

    int row_sum(int i) const {
        int s = 0;
        for (int c = 0; c < num_classes; ++c) s += at(i, c);
        return s;
    }
    int column_sum(int c) const {
        int s = 0;
        for (int i = 0; i < num_images; ++i) s += at(i, c);
        return s;
    }
    int selected() const { return static_cast<int>(std::count(v.begin(), v.end(), std::uint8_t{1})); }

    /// Binary entries, at most one selected class per image.
    bool feasible() const {
        if (v.size() != static_cast<std::size_t>(num_images) * num_classes) return false;
        for (auto e : v)
            if (e > 1) return false;
        for (int i = 0; i < num_images; ++i)
            if (row_sum(i) > 1) return false;
        return true;
    }

    friend bool operator==(const SelectionMatrix&, const SelectionMatrix&) = default;
};

/// L[j][i][c] for m models, u unlabeled images and C classes; entries are
/// non-negative or +inf (class absent from the image's pseudo labels).
struct LossTensor {
    int num_models = 0;
    int num_images = 0;
    int num_classes = 0;
    std::vector<double> data;

    LossTensor() = default;
    LossTensor(int models, int images, int classes)
        : num_models(models), num_images(images), num_classes(classes),
          data(static_cast<std::size_t>(models) * images * classes, std::numeric_limits<double>::infinity()) {}

    double at(int j, int i, int c) const { return data[(static_cast<std::size_t>(j) * num_images + i) * num_classes + c]; }
    double& at(int j, int i, int c) { return data[(static_cast<std::size_t>(j) * num_images + i) * num_classes + c]; }
};

using GammaMatrix = std::vector<std::vector<double>>;

struct PaceState {
    int iteration = 1;
    std::vector<int> targets;  // R[c]
    GammaMatrix gamma;         // m x m, symmetric, zero diagonal; empty when m == 1

    friend bool operator==(const PaceState&, const PaceState&) = default;
};

/// Result of a count-form update: the new matrix and the per-class lambda it implies.
struct SelectionUpdate {
    SelectionMatrix selection;
    std::vector<double> lambda;
};

/// 0.2 / (m - 1), the fixed coupling strength between any two models.
inline double default_gamma_value(int m) {
    if (m < 2) throw InvalidArgument("gamma is only defined for m >= 2");
    return 0.2 / static_cast<double>(m - 1);
}

/// Uniform off-diagonal gamma matrix; empty for a single model.
inline GammaMatrix default_gamma(int m) {
    if (m < 1) throw InvalidArgument("m must be >= 1");
    if (m == 1) return {};
    const double g = default_gamma_value(m);
    GammaMatrix out(m, std::vector<double>(m, g));
    for (int j = 0; j < m; ++j) out[j][j] = 0.0;
    return out;
}

inline PaceState initial_pace(int num_classes, int initial_target, int num_models) {
    if (initial_target < 0) throw InvalidArgument("initial pace target must be non-negative");
    return PaceState{1, std::vector<int>(num_classes, initial_target), default_gamma(num_models)};
}

/// R' = round_half_up(R * (k + 1) / k), k' = k + 1. Integer arithmetic, so R_k = R_1 * k exactly.
inline PaceState advance_pace(const PaceState& pace) {
    if (pace.iteration < 1) throw InvalidArgument("pace iteration must be >= 1");
    PaceState next = pace;
    const long long k = pace.iteration;
    for (auto& r : next.targets) {
        const long long num = static_cast<long long>(r) * (k + 1);
        r = static_cast<int>((2 * num + k) / (2 * k));
    }
    next.iteration = pace.iteration + 1;
    return next;
}

namespace detail {

inline void check_shapes(int j, const LossTensor& L, std::span<const SelectionMatrix> others, const GammaMatrix& gamma) {
    if (j < 0 || j >= L.num_models) throw InvalidArgument("model index out of range");
    for (const auto& o : others) {
        if (o.model_id == j) throw InvalidArgument("others must not contain the updated model");
        if (o.num_images != L.num_images || o.num_classes != L.num_classes)
            throw InvalidArgument("selection matrix shape does not match the loss tensor");
        if (o.model_id < 0 || static_cast<std::size_t>(o.model_id) >= gamma.size() ||
            static_cast<std::size_t>(j) >= gamma[o.model_id].size())
            throw InvalidArgument("gamma matrix does not cover model " + std::to_string(o.model_id));
    }
}

/// Others sorted by model id, so bonus sums do not depend on argument order.
inline std::vector<const SelectionMatrix*> sorted_others(std::span<const SelectionMatrix> others) {
    std::vector<const SelectionMatrix*> out;
    for (const auto& o : others) out.push_back(&o);
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->model_id < b->model_id; });
    return out;
}

/// Sum of finite doubles kept exactly as non-overlapping partials of
/// increasing magnitude (Shewchuk's expansion, as used by Python's fsum).
/// Rounding happens once, when the value is read.
class ExactSum {
public:
    void add(double x) {
        std::size_t k = 0;
        for (double y : partials_) {
            if (std::abs(x) < std::abs(y)) std::swap(x, y);
            const double hi = x + y;
            const double lo = y - (hi - x);
            if (lo != 0.0) partials_[k++] = lo;
            x = hi;
        }
        partials_.resize(k);
        partials_.push_back(x);
    }

    /// x * n added without rounding the product.
    void add_product(double x, double n) {
        const double p = x * n;
        add(p);
        add(std::fma(x, n, -p));
    }

    /// Correctly rounded to nearest, ties to even.
    double value() const {
        if (partials_.empty()) return 0.0;
        std::size_t n = partials_.size();
        double hi = partials_[--n];
        double lo = 0.0;
        while (n > 0) {
            const double x = hi;
            const double y = partials_[--n];
            hi = x + y;
            lo = y - (hi - x);
            if (lo != 0.0) break;
        }
        // Half-way case: the remaining partials decide the direction.
        if (n > 0 && ((lo < 0 && partials_[n - 1] < 0) || (lo > 0 && partials_[n - 1] > 0))) {
            const double y = lo * 2;
            const double x = hi + y;
            if (y == x - hi) hi = x;
        }
        return hi;
    }

    /// Smallest double not below the exact sum.
    double upper() const {
        const double s = value();
        ExactSum rest = *this;
        rest.add(-s);
        return rest.sign() > 0 ? std::nextafter(s, std::numeric_limits<double>::infinity()) : s;
    }

    /// Largest double not above the exact sum.
    double lower() const {
        const double s = value();
        ExactSum rest = *this;
        rest.add(-s);
        return rest.sign() < 0 ? std::nextafter(s, -std::numeric_limits<double>::infinity()) : s;
    }

    void subtract(const ExactSum& other) {
        for (double p : other.partials_) add(-p);
    }

    int sign() const {
        for (auto it = partials_.rbegin(); it != partials_.rend(); ++it)
            if (*it != 0.0) return *it > 0 ? 1 : -1;
        return 0;
    }

private:
    std::vector<double> partials_;
};

/// A[i][c] = L[j][i][c] - sum_{k != j} gamma[j][k] v^k[i][c], rounded upward.
/// Rounding up keeps every entry with A <= lambda non-positive in the exact
/// objective, so a selection never increases it by a rounding error.
inline std::vector<double> adjusted_loss(int j, const LossTensor& L, const GammaMatrix& gamma,
                                         std::span<const SelectionMatrix> others) {
    const auto sorted = sorted_others(others);
    std::vector<double> A(static_cast<std::size_t>(L.num_images) * L.num_classes);
    for (int i = 0; i < L.num_images; ++i)
        for (int c = 0; c < L.num_classes; ++c) {
            const double l = L.at(j, i, c);
            double& a = A[static_cast<std::size_t>(i) * L.num_classes + c];
            a = l;
            if (!std::isfinite(l)) continue;
            ExactSum s;
            s.add(l);
            bool agreed = false;
            for (const auto* o : sorted)
                if (o->at(i, c)) {
                    s.add(-gamma[j][o->model_id]);
                    agreed = true;
                }
            if (agreed) a = s.upper();
        }
    return A;
}

/// Adds model j's linear terms sum v (L - lambda) to `total`.
inline void add_linear_terms(ExactSum& total, int j, const LossTensor& L, const SelectionMatrix& Vj,
                             std::span<const double> lambda) {
    for (int i = 0; i < L.num_images; ++i)
        for (int c = 0; c < L.num_classes; ++c) {
            if (!Vj.at(i, c)) continue;
            const double l = L.at(j, i, c);
            if (!std::isfinite(l)) throw InvalidArgument("selected entry has infinite loss");
            if (!std::isfinite(lambda[c])) throw InvalidArgument("lambda must be finite");
            total.add(l);
            total.add(-lambda[c]);
        }
}

inline int overlap(const SelectionMatrix& a, const SelectionMatrix& b) {
    int n = 0;
    for (std::size_t e = 0; e < a.v.size(); ++e) n += a.v[e] & b.v[e];
    return n;
}

/// Exact adjusted loss of a finite entry, as an expansion.
inline ExactSum exact_adjusted(int j, int i, int c, const LossTensor& L, const GammaMatrix& gamma,
                               const std::vector<const SelectionMatrix*>& sorted) {
    ExactSum s;
    s.add(L.at(j, i, c));
    for (const auto* o : sorted)
        if (o->at(i, c)) s.add(-gamma[j][o->model_id]);
    return s;
}

/// Exact A[i][c] - lambda[c] for model j, as an expansion.
inline ExactSum exact_margin(int j, int i, int c, const LossTensor& L, const GammaMatrix& gamma,
                             const std::vector<const SelectionMatrix*>& sorted, std::span<const double> lambda) {
    ExactSum s = exact_adjusted(j, i, c, L, gamma, sorted);
    s.add(-lambda[c]);
    return s;
}

/// Keeps, per image, the selected class with the lowest margin A - lambda;
/// ties go to the lower adjusted loss, then to the lower class index.
/// Margins are compared exactly, not after rounding.
inline void enforce_rows(SelectionMatrix& V, int j, const LossTensor& L, const GammaMatrix& gamma,
                         std::span<const SelectionMatrix> others, const std::vector<double>& A,
                         std::span<const double> lambda) {
    const auto sorted = sorted_others(others);
    for (int i = 0; i < V.num_images; ++i) {
        int best = -1;
        for (int c = 0; c < V.num_classes; ++c) {
            if (!V.at(i, c)) continue;
            if (best < 0) {
                best = c;
                continue;
            }
            // sign of margin(c) - margin(best)
            ExactSum d = exact_margin(j, i, c, L, gamma, sorted, lambda);
            const ExactSum b = exact_margin(j, i, best, L, gamma, sorted, lambda);
            d.subtract(b);
            const int cmp = d.sign();
            const double a = A[static_cast<std::size_t>(i) * V.num_classes + c];
            const double a_best = A[static_cast<std::size_t>(i) * V.num_classes + best];
            if (cmp < 0 || (cmp == 0 && a < a_best)) best = c;
        }
        for (int c = 0; c < V.num_classes; ++c) V.at(i, c) = static_cast<std::uint8_t>(c == best);
    }
}

}  // namespace detail

/// Threshold form: v[i][c] = 1 iff L[j][i][c] < lambda[c] + sum_k gamma[j][k] v^k[i][c],
/// followed by the one-class-per-image rule.
inline SelectionMatrix select_with_lambda(int j, const LossTensor& L, std::span<const double> lambda,
                                          const GammaMatrix& gamma, std::span<const SelectionMatrix> others) {
    detail::check_shapes(j, L, others, gamma);
    if (lambda.size() != static_cast<std::size_t>(L.num_classes)) throw InvalidArgument("lambda needs one entry per class");
    const auto A = detail::adjusted_loss(j, L, gamma, others);
    SelectionMatrix V(j, L.num_images, L.num_classes);
    for (int i = 0; i < L.num_images; ++i)
        for (int c = 0; c < L.num_classes; ++c) {
            const double a = A[static_cast<std::size_t>(i) * L.num_classes + c];
            V.at(i, c) = static_cast<std::uint8_t>(std::isfinite(a) && a < lambda[c]);
        }
    detail::enforce_rows(V, j, L, gamma, others, A, lambda);
    return V;
}

/// Count form used by the training loop: for each class select the R[c]
/// smallest finite adjusted losses (ties to the lower image index), set
/// lambda[c] to the R[c]-th of them, then apply the one-class-per-image rule.
/// Classes with fewer than R[c] finite losses select all of them; with
/// R[c] = 0 lambda[c] is the smallest adjusted loss and nothing is selected.
/// No refill happens after the row rule removes an entry.
inline SelectionUpdate update_v(int j, const LossTensor& L, const PaceState& pace,
                                std::span<const SelectionMatrix> others) {
    detail::check_shapes(j, L, others, pace.gamma);
    if (pace.targets.size() != static_cast<std::size_t>(L.num_classes))
        throw InvalidArgument("pace targets need one entry per class");
    const auto A = detail::adjusted_loss(j, L, pace.gamma, others);
    const int C = L.num_classes;

    SelectionUpdate out{SelectionMatrix(j, L.num_images, C), std::vector<double>(C, 0.0)};
    for (int c = 0; c < C; ++c) {
        std::vector<int> finite;
        for (int i = 0; i < L.num_images; ++i)
            if (std::isfinite(A[static_cast<std::size_t>(i) * C + c])) finite.push_back(i);
        std::stable_sort(finite.begin(), finite.end(), [&](int a, int b) {
            return A[static_cast<std::size_t>(a) * C + c] < A[static_cast<std::size_t>(b) * C + c];
        });
        const int R = pace.targets[c];
        if (finite.empty()) continue;  // lambda stays 0, nothing selectable
        if (R <= 0) {
            // Rounded down, so no unselected entry has a negative margin.
            const auto sorted = detail::sorted_others(others);
            double lo = std::numeric_limits<double>::infinity();
            for (int i : finite) lo = std::min(lo, detail::exact_adjusted(j, i, c, L, pace.gamma, sorted).lower());
            out.lambda[c] = lo;
            continue;
        }
        const int take = std::min<int>(R, static_cast<int>(finite.size()));
        for (int r = 0; r < take; ++r) out.selection.at(finite[r], c) = 1;
        out.lambda[c] = A[static_cast<std::size_t>(finite[take - 1]) * C + c];
    }
    detail::enforce_rows(out.selection, j, L, pace.gamma, others, A, out.lambda);
    return out;
}

/// V-dependent part of the objective restricted to model j's terms:
/// sum v^j (L^j - lambda^j) - sum_{k != j} gamma[j][k] <V_j, V_k>.
/// Selected entries must have finite loss; unselected ones contribute 0.
/// The sum is exact and rounded once, so it is monotone in the exact value.
inline double block_objective(int j, const LossTensor& L, const SelectionMatrix& Vj, std::span<const double> lambda,
                              const GammaMatrix& gamma, std::span<const SelectionMatrix> others) {
    detail::ExactSum total;
    detail::add_linear_terms(total, j, L, Vj, lambda);
    for (const auto* o : detail::sorted_others(others))
        total.add_product(-gamma[j][o->model_id], detail::overlap(Vj, *o));
    return total.value();
}

/// Full V-dependent objective: sum_j sum_{i,c} v (L - lambda) - sum_{j1<j2} gamma <V_j1, V_j2>.
/// `Vs[j]` and `lambdas[j]` belong to model j. The supervised term is constant in V and omitted.
inline double objective(const LossTensor& L, std::span<const SelectionMatrix> Vs,
                        const std::vector<std::vector<double>>& lambdas, const GammaMatrix& gamma) {
    if (Vs.size() != static_cast<std::size_t>(L.num_models) || lambdas.size() != Vs.size())
        throw InvalidArgument("objective needs one selection matrix and lambda vector per model");
    detail::ExactSum total;
    for (int j = 0; j < L.num_models; ++j) {
        if (!Vs[j].feasible()) throw InvalidArgument("selection matrix violates the row/binary constraints");
        detail::add_linear_terms(total, j, L, Vs[j], lambdas[j]);
    }
    for (int a = 0; a < L.num_models; ++a)
        for (int b = a + 1; b < L.num_models; ++b) total.add_product(-gamma[a][b], detail::overlap(Vs[a], Vs[b]));
    return total.value();
}

}  // namespace mspld
