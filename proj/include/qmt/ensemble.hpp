#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qmt/measure.hpp"
#include "qmt/path.hpp"

namespace qmt {

/// State of the interacting particle system at one time: N particles driven by
/// a single common noise path, differing only through their initial draws.
struct ParticleEnsemble {
  double time = 0.0;
  int dim = 1;
  std::vector<double> states;         // N * d
  std::vector<double> initial_draws;  // N * d, retained for exchangeability checks
  std::uint64_t path_ref = 0;         // seed of the driving path

  std::size_t size() const { return states.size() / static_cast<std::size_t>(dim); }

  std::span<const double> particle(std::size_t i) const {
    return {states.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }

  EmpiricalMeasure as_measure() const { return EmpiricalMeasure(dim, states); }
};

enum class RecordMode { full, terminal_only };

/// Result of one simulated run: ensembles per recorded grid time, the controls
/// actually applied per step, and the driving path.
struct Trajectory {
  int dim = 1;
  int control_dim = 1;
  std::size_t start_step = 0;  // index of the start time in the path grid
  CommonNoisePath path;
  RecordMode mode = RecordMode::full;

  std::vector<double> times;                  // recorded times (start .. T)
  std::vector<std::size_t> time_steps;        // grid index of each recorded entry
  std::vector<std::vector<double>> states;    // per recorded time, N * d
  std::vector<std::vector<double>> controls;  // per step (full mode), N * q
  std::vector<double> initial_draws;          // N * d
  std::uint64_t clamps = 0;

  std::size_t entries() const { return states.size(); }
  std::size_t particles() const {
    return states.empty() ? 0 : states.front().size() / static_cast<std::size_t>(dim);
  }

  EmpiricalMeasure measure_at(std::size_t idx) const {
    return EmpiricalMeasure(dim, states[idx]);
  }

  ParticleEnsemble ensemble_at(std::size_t idx) const {
    ParticleEnsemble e;
    e.time = times[idx];
    e.dim = dim;
    e.states = states[idx];
    e.initial_draws = initial_draws;
    e.path_ref = path.seed;
    return e;
  }

  const std::vector<double>& terminal_states() const { return states.back(); }
  EmpiricalMeasure terminal_measure() const { return measure_at(states.size() - 1); }

  std::span<const double> control_at(std::size_t step_entry, std::size_t particle) const {
    return {controls[step_entry].data() + particle * static_cast<std::size_t>(control_dim),
            static_cast<std::size_t>(control_dim)};
  }
};

}  // namespace qmt
