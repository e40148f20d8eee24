#pragma once

#include <vector>

#include "difflens/trace.hpp"

namespace difflens {

/// Design targets and manufacturability tolerances of one optimization task.
struct DesignSpec {
    double ttl_max_mm = 0.0;
    double fov_deg = 0.0;          // full diagonal field of view
    double image_height_mm = 6.0;  // full diagonal
    double gap_epsilon_mm = 0.02;
    double dist_epsilon = 0.005;

    double half_fov_deg() const { return 0.5 * fov_deg; }
    double effl_target() const {
        return image_height_mm / (2.0 * std::tan(0.5 * fov_deg * M_PI / 180.0));
    }
};

struct LossWeights {
    double ttl = 0.5;
    double effl = 10.0;
    double gap = 3.0;
    double dist = 5.0;
};

template <class T>
struct LossTerms {
    T spot{};
    T ttl{};
    T effl{};
    T gap{};
    T dist{};
    T optic{};
    T effl_value{}; // raw EFFL, handy for rate scaling and logs
};

struct OpticalLossReport {
    LossTerms<double> terms;
    LossWeights weights;
    double effl_target = 0.0;
    // gradient norms over the trainable parameters, one per term
    double grad_spot = 0.0, grad_ttl = 0.0, grad_effl = 0.0, grad_gap = 0.0, grad_dist = 0.0;
    bool has_gradients = false;
};

struct LossOptions {
    int spot_grid_n = 12;
    int field_count = 5;       // uniform in tan space from 0 to the half FoV
    double v_small_rad = 1e-3; // DFFL probe angle
    int gap_samples = 256;
    PlanOptions plan;
    TraceOptions trace;
};

/// Smallest axial gap between adjacent surfaces (and the image plane) over
/// the shared aperture; negative means self-intersection.
double min_surface_gap(const LensSystem& system, int samples = 256);

/// Optical merit terms evaluated against a sampling plan frozen at
/// construction: vignetting ellipses, pupil grids, chief-ray aim coordinates
/// and reference points all stay fixed, so gradients and finite differences
/// see the same smooth function of the lens parameters.
class OpticalLossEvaluator {
public:
    OpticalLossEvaluator(const LensSystem& system, const DesignSpec& spec, LossOptions opt = {});

    const TracePlan& plan() const { return plan_; }
    const std::vector<FieldSpec>& loss_fields() const { return fields_; }
    const DesignSpec& design() const { return spec_; }

    /// Re-evaluates with the frozen plan; `system` must share the base
    /// prescription structure (same surfaces/media/apertures).
    LossTerms<double> evaluate(const LensSystem& system) const;
    LossTerms<Real> evaluate_taped(Tape& tape, const TapedSystem& taped) const;

    /// Loss report with optional per-term gradient norms over the trainable
    /// parameters.
    OpticalLossReport report(const LensSystem& system, const ParamVector* params = nullptr) const;

private:
    template <class T>
    LossTerms<T> eval_impl(const SystemView<T>& view) const;

    DesignSpec spec_;
    LossOptions opt_;
    std::vector<FieldSpec> fields_;
    TracePlan plan_;      // loss fields first, DFFL probe field last
    int dffl_index_ = -1; // index of the small-angle probe in plan_.fields
};

} // namespace difflens
