#pragma once

#include <functional>
#include <string>

#include "difflens/coherent_psf.hpp"
#include "difflens/losses.hpp"

namespace difflens {

struct OptimizerConfig {
    double eta = 1e-3;
    int steps = 200;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // user multipliers on top of the EFFL-relative kind scaling
    double mult_curvature = 1.0;
    double mult_thickness = 1.0;
    double mult_conic = 1.0;
    double mult_asphere = 1.0;
    LossOptions loss;
    int log_every = 1;
    bool deterministic = true;
    double lambda_lens = 1.0; // weight of the external PSF merit hook
    PsfRenderOptions psf;     // sampling used for hook PSFs
    int max_halvings = 8;
};

/// EFFL-relative learning rates: curvature eta/f, thickness eta*f, conic eta,
/// aspheric coefficient i eta/f^(i-1).
double scaled_rate(ParamKind kind, int asphere_index, double effl_mm, double eta);

/// Seam for an externally supplied PSF merit: the optimizer renders the
/// requested PSFs, the hook returns a merit value and a cotangent per grid
/// cell, and those cotangents are injected into the same backward sweep as
/// the optical loss.
struct HookResult {
    double merit = 0.0;
    // [field][channel][cell], same layout as TapedPsfChannels::channels
    std::vector<std::vector<std::vector<double>>> cotangents;
};

struct PsfMeritHook {
    std::vector<FieldSpec> fields;
    std::function<HookResult(const std::vector<TapedPsfChannels>&)> eval;
};

struct StepRecord {
    int step = 0;
    LossTerms<double> losses;
    double min_gap = 0.0;
    double step_scale = 1.0;
    double hook_merit = 0.0;
    std::vector<double> params; // trainable values after this step's update
};

struct OptimizeResult {
    std::vector<StepRecord> trajectory;
    bool aborted = false;
    bool gradient_all_zero = false;
    std::string message;
};

/// Adaptive-moment descent over the trainable entries of `params`, with the
/// EFFL-relative per-kind rates, re-planned sampling each step, and a
/// step-halving retry when an update leaves the lens untraceable or
/// self-intersecting. `system` and `params` are left at the last valid state.
OptimizeResult optimize(LensSystem& system, ParamVector& params, const DesignSpec& spec,
                        const OptimizerConfig& config, const PsfMeritHook* hook = nullptr);

} // namespace difflens
