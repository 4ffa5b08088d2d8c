#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "jumpflow/error.hpp"

namespace jumpflow {

/// One atom of a finite Levy measure: a mark in E = R^l \ {0} and its mass.
struct Atom {
  std::vector<double> mark;
  double weight = 0.0;
};

/// A jump of the Poisson random measure; `atom` indexes the measure's atoms.
struct JumpRecord {
  double time = 0.0;
  std::size_t atom = 0;
};

/**
 * Finite atomic Levy measure lambda on E = R^mark_dim \ {0}.
 *
 * Integrals against lambda are exact atomic sums. The compensated measure
 * is mu - dt lambda(de). Instances are immutable after construction.
 */
class LevyMeasure {
public:
  /// The zero measure on R^1 \ {0}.
  LevyMeasure() = default;

  LevyMeasure(std::size_t mark_dim, std::vector<Atom> atoms)
      : mark_dim_(mark_dim), atoms_(std::move(atoms)) {
    if (mark_dim_ == 0)
      throw ConfigError("levy measure: mark dimension must be >= 1");
    double small_jump_moment = 0.0;
    for (std::size_t a = 0; a < atoms_.size(); ++a) {
      const auto &atom = atoms_[a];
      if (atom.mark.size() != mark_dim_)
        throw ConfigError("levy measure: atom " + std::to_string(a) +
                          " has mark of dimension " +
                          std::to_string(atom.mark.size()) + ", expected " +
                          std::to_string(mark_dim_));
      if (!(atom.weight > 0.0) || !std::isfinite(atom.weight))
        throw ConfigError("levy measure: atom " + std::to_string(a) +
                          " must have a finite positive weight");
      double norm2 = 0.0;
      for (double c : atom.mark) {
        if (!std::isfinite(c))
          throw ConfigError("levy measure: atom " + std::to_string(a) +
                            " has a non-finite mark");
        norm2 += c * c;
      }
      if (norm2 == 0.0)
        throw ConfigError("levy measure: atom " + std::to_string(a) +
                          " sits at the origin, which is excluded from E");
      total_mass_ += atom.weight;
      small_jump_moment += std::min(1.0, norm2) * atom.weight;
    }
    if (!std::isfinite(total_mass_) || !std::isfinite(small_jump_moment))
      throw ConfigError("levy measure: total mass is not finite");
  }

  /// Convenience constructor for one-dimensional marks: {(mark, weight)}.
  static LevyMeasure scalar(std::initializer_list<std::pair<double, double>> atoms) {
    std::vector<Atom> out;
    for (auto [mark, weight] : atoms)
      out.push_back(Atom{{mark}, weight});
    return LevyMeasure(1, std::move(out));
  }

  std::size_t mark_dim() const noexcept { return mark_dim_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  bool empty() const noexcept { return atoms_.empty(); }
  const std::vector<Atom> &atoms() const noexcept { return atoms_; }
  std::span<const double> mark(std::size_t a) const { return atoms_[a].mark; }
  double weight(std::size_t a) const { return atoms_[a].weight; }

  /// lambda(E).
  double total_mass() const noexcept { return total_mass_; }

  /// Exact integral of phi against lambda; phi is called with each mark.
  template <class Phi> double integrate(Phi &&phi) const {
    double acc = 0.0;
    for (std::size_t a = 0; a < atoms_.size(); ++a) {
      const double v = phi(std::span<const double>(atoms_[a].mark));
      if (!std::isfinite(v))
        throw IntegrationError("integrand is not finite at atom " +
                               std::to_string(a));
      acc += v * atoms_[a].weight;
    }
    return acc;
  }

  /// Same as integrate, but phi receives the atom index.
  template <class Phi> double integrate_atoms(Phi &&phi) const {
    double acc = 0.0;
    for (std::size_t a = 0; a < atoms_.size(); ++a) {
      const double v = phi(a);
      if (!std::isfinite(v))
        throw IntegrationError("integrand is not finite at atom " +
                               std::to_string(a));
      acc += v * atoms_[a].weight;
    }
    return acc;
  }

  /**
   * Draws the jumps of mu on (t0, t1): Poisson(lambda(E)(t1 - t0)) many,
   * uniform times, marks with probability weight / lambda(E). Sorted by time.
   */
  template <class Rng>
  std::vector<JumpRecord> sample_jumps(double t0, double t1, Rng &rng) const {
    std::vector<JumpRecord> out;
    append_jumps(t0, t1, rng, out);
    return out;
  }

  /// Appends the sampled jumps to `out`; returns how many were added.
  template <class Rng>
  std::size_t append_jumps(double t0, double t1, Rng &rng,
                           std::vector<JumpRecord> &out) const {
    if (atoms_.empty() || !(t1 > t0))
      return 0;
    std::poisson_distribution<std::size_t> count_dist(total_mass_ * (t1 - t0));
    const std::size_t count = count_dist(rng);
    if (count == 0)
      return 0;
    std::uniform_real_distribution<double> time_dist(t0, t1);
    const std::size_t first = out.size();
    for (std::size_t n = 0; n < count; ++n) {
      double t = time_dist(rng);
      // the owning interval is open at t0
      if (t <= t0)
        t = std::nextafter(t0, t1);
      out.push_back(JumpRecord{t, pick_atom(rng)});
    }
    std::sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
              [](const JumpRecord &a, const JumpRecord &b) { return a.time < b.time; });
    return count;
  }

private:
  template <class Rng> std::size_t pick_atom(Rng &rng) const {
    if (atoms_.size() == 1)
      return 0;
    std::uniform_real_distribution<double> u(0.0, total_mass_);
    const double r = u(rng);
    double cum = 0.0;
    for (std::size_t a = 0; a + 1 < atoms_.size(); ++a) {
      cum += atoms_[a].weight;
      if (r < cum)
        return a;
    }
    return atoms_.size() - 1;
  }

  std::size_t mark_dim_ = 1;
  std::vector<Atom> atoms_;
  double total_mass_ = 0.0;
};

inline double total_mass(const LevyMeasure &measure) { return measure.total_mass(); }

} // namespace jumpflow
