#include "difflens/optimizer.hpp"

#include <cmath>

namespace difflens {

double scaled_rate(ParamKind kind, int asphere_index, double effl_mm, double eta) {
    switch (kind) {
    case ParamKind::Curvature: return eta / effl_mm;
    case ParamKind::Thickness: return eta * effl_mm;
    case ParamKind::Conic: return eta;
    case ParamKind::Asphere: return eta / std::pow(effl_mm, asphere_index - 1);
    }
    return eta;
}

namespace {

double kind_multiplier(const OptimizerConfig& cfg, ParamKind kind) {
    switch (kind) {
    case ParamKind::Curvature: return cfg.mult_curvature;
    case ParamKind::Thickness: return cfg.mult_thickness;
    case ParamKind::Conic: return cfg.mult_conic;
    case ParamKind::Asphere: return cfg.mult_asphere;
    }
    return 1.0;
}

// A candidate must stay traceable at every loss field and keep all surfaces
// apart before it replaces the current state.
bool candidate_valid(const LensSystem& system, const DesignSpec& spec,
                     const LossOptions& loss_opt) {
    try {
        if (min_surface_gap(system) <= 0.0) return false;
        OpticalLossEvaluator check(system, spec, loss_opt);
        (void)check.evaluate(system);
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

} // namespace

OptimizeResult optimize(LensSystem& system, ParamVector& params, const DesignSpec& spec,
                        const OptimizerConfig& config, const PsfMeritHook* hook) {
    OptimizeResult result;
    std::vector<std::size_t> train = params.trainable_indices();
    if (train.empty()) {
        result.message = "no trainable parameters";
        result.aborted = true;
        return result;
    }
    std::vector<double> m(train.size(), 0.0), v(train.size(), 0.0);

    for (int step = 0; step < config.steps; ++step) {
        OpticalLossEvaluator evaluator(system, spec, config.loss);
        Tape tape;
        TapedSystem ts = taped_view(system, params, tape);
        LossTerms<Real> terms = evaluator.evaluate_taped(tape, ts);

        std::vector<std::pair<Real, double>> seeds{{terms.optic, 1.0}};
        double hook_merit = 0.0;
        std::vector<TapedPsfChannels> hook_psfs;
        if (hook) {
            TracePlan hook_plan =
                build_trace_plan(system, hook->fields, config.psf.pupil_grid_n, config.loss.plan);
            for (std::size_t f = 0; f < hook->fields.size(); ++f)
                hook_psfs.push_back(
                    psf_three_channel_taped(tape, ts.view, hook_plan, hook_plan.fields[f], config.psf));
            HookResult hr = hook->eval(hook_psfs);
            hook_merit = hr.merit;
            for (std::size_t f = 0; f < hook_psfs.size(); ++f)
                for (std::size_t ch = 0; ch < hook_psfs[f].channels.size(); ++ch)
                    for (std::size_t g = 0; g < hook_psfs[f].channels[ch].size(); ++g) {
                        double w = hr.cotangents[f][ch][g];
                        if (w != 0.0)
                            seeds.push_back({hook_psfs[f].channels[ch][g], config.lambda_lens * w});
                    }
        }
        tape.backward_multi(seeds);
        Gradient grad = collect_gradient(tape, ts);
        result.gradient_all_zero = grad.all_zero;

        double f_now = value_of(terms.effl_value);
        double t_adam = static_cast<double>(step + 1);
        double bc1 = 1.0 - std::pow(config.beta1, t_adam);
        double bc2 = 1.0 - std::pow(config.beta2, t_adam);
        std::vector<double> delta(train.size(), 0.0);
        for (std::size_t i = 0; i < train.size(); ++i) {
            double g = grad.values[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            const ParamRef& ref = params.entries[train[i]].ref;
            double lr = scaled_rate(ref.kind, ref.asphere_index, f_now, config.eta) *
                        kind_multiplier(config, ref.kind);
            delta[i] = lr * mhat / (std::sqrt(vhat) + config.epsilon);
        }

        // apply with step-halving retry on trace failure
        double scale = 1.0;
        bool applied = false;
        for (int attempt = 0; attempt <= config.max_halvings; ++attempt) {
            LensSystem candidate_sys = system;
            ParamVector candidate = params;
            for (std::size_t i = 0; i < train.size(); ++i)
                candidate.entries[train[i]].value -= scale * delta[i];
            candidate.apply_to(candidate_sys);
            if (candidate_valid(candidate_sys, spec, config.loss)) {
                system = candidate_sys;
                params = candidate;
                applied = true;
                break;
            }
            scale *= 0.5;
        }
        if (!applied) {
            result.aborted = true;
            result.message = "aborted at step " + std::to_string(step) +
                             ": 8 consecutive failed retries, keeping the last valid prescription";
            return result;
        }

        if (step % config.log_every == 0 || step + 1 == config.steps) {
            StepRecord rec;
            rec.step = step;
            rec.losses = {value_of(terms.spot),  value_of(terms.ttl),  value_of(terms.effl),
                          value_of(terms.gap),   value_of(terms.dist), value_of(terms.optic),
                          value_of(terms.effl_value)};
            rec.min_gap = min_surface_gap(system);
            rec.step_scale = scale;
            rec.hook_merit = hook_merit;
            for (std::size_t i : train) rec.params.push_back(params.entries[i].value);
            result.trajectory.push_back(std::move(rec));
        }
    }

    // closing record with the final state's losses
    OpticalLossEvaluator evaluator(system, spec, config.loss);
    LossTerms<double> final_terms = evaluator.evaluate(system);
    StepRecord rec;
    rec.step = config.steps;
    rec.losses = final_terms;
    rec.min_gap = min_surface_gap(system);
    for (std::size_t i : train) rec.params.push_back(params.entries[i].value);
    result.trajectory.push_back(std::move(rec));
    return result;
}

} // namespace difflens
