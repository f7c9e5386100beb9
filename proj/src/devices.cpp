#include "stvs/devices.hpp"

#include <algorithm>
#include <cmath>

namespace stvs::dev {

Complex sm_norton_current(const SmTransientModel& sm, Complex v_terminal) {
    const Complex j(0.0, 1.0);
    const Complex q_axis = std::polar(1.0, sm.delta);       // unit phasor of the q axis
    const Complex d_axis = q_axis * std::polar(1.0, -kPi / 2.0);

    // Decompose V onto the machine axes: V e^{-j delta} = V_Q - j V_D.
    const Complex v_rot = v_terminal * std::polar(1.0, -sm.delta);
    const double v_q = v_rot.real();
    const double v_d = -v_rot.imag();

    const Complex i_d_source = (sm.e_q_prime / sm.x_d_prime) * d_axis;
    return i_d_source - (v_q * q_axis) / (j * sm.x_d_prime) - (v_d * d_axis) / (j * sm.x_q);
}

DqPair gfl_inner_reference(DqPair i_ref_outer, DqPair v_dq, double theta_dq, double x_d_prime,
                           double x_q) {
    const double s = std::sin(theta_dq);
    const double c = std::cos(theta_dq);
    const double k_cross = s * c * (1.0 / x_q - 1.0 / x_d_prime);

    DqPair out;
    out.d = i_ref_outer.d - k_cross * v_dq.d - (c * c / x_d_prime + s * s / x_q) * v_dq.q;
    out.q = i_ref_outer.q + (c * c / x_q + s * s / x_d_prime) * v_dq.d + k_cross * v_dq.q;
    return out;
}

Complex gfl_norton_phasor(Complex i_internal, Complex v, double b_virtual) {
    return i_internal + Complex(0.0, b_virtual) * v;
}

Complex gfm_terminal_voltage(Complex e_internal, Complex i, double x_virtual) {
    return e_internal - Complex(0.0, x_virtual) * i;
}

Complex gfm_current_from_voltage(Complex e_internal, Complex v, double x_virtual) {
    return (e_internal - v) / Complex(0.0, x_virtual);
}

LvrtReference gfl_lvrt_baseline(double v_mag_filtered, const LvrtBaselineParams& params) {
    LvrtReference ref;
    ref.i_q = std::clamp(params.k_q * (0.9 - v_mag_filtered), 0.0, params.i_max);
    const double headroom_sq = params.i_max * params.i_max - ref.i_q * ref.i_q;
    ref.i_d = std::min(params.i_d_prefault, std::sqrt(std::max(headroom_sq, 0.0)));
    return ref;
}

std::string to_string(Mode m) {
    switch (m) {
        case Mode::Normal: return "NORMAL";
        case Mode::Frt: return "FRT";
        case Mode::Recovery: return "RECOVERY";
    }
    return "?";
}

std::optional<ModeTransition> frt_mode_step(ControlMode& state, double v_mag_filtered, double t,
                                            const ModeThresholds& thresholds,
                                            double recovery_tolerance, double ref_gap) {
    if (!(thresholds.v_enter < thresholds.v_exit)) {
        throw InternalError("mode thresholds must satisfy v_enter < v_exit");
    }

    auto commit = [&](Mode to, const std::string& cause) -> ModeTransition {
        ModeTransition tr{state.mode, to, t, cause};
        state.mode = to;
        state.entered_at = t;
        return tr;
    };

    switch (state.mode) {
        case Mode::Normal:
            if (v_mag_filtered < thresholds.v_enter) {
                return commit(Mode::Frt, "filtered |V| below entry threshold");
            }
            break;
        case Mode::Frt:
            if (v_mag_filtered > thresholds.v_exit) {
                return commit(Mode::Recovery, "filtered |V| above exit threshold");
            }
            break;
        case Mode::Recovery:
            if (v_mag_filtered < thresholds.v_enter) {
                return commit(Mode::Frt, "re-fault during recovery");
            }
            if (ref_gap < recovery_tolerance) {
                return commit(Mode::Normal, "references within recovery tolerance");
            }
            break;
    }
    return std::nullopt;
}

double recovery_reference(double ref_frozen, double ref_prefreeze, double dt_since_clear,
                          double tau_rec) {
    const double blend = 1.0 - std::exp(-dt_since_clear / tau_rec);
    return ref_frozen + blend * (ref_prefreeze - ref_frozen);
}

GflOuterDerivatives gfl_outer_derivatives(const GflOuterState& state, const GflMeasurements& meas,
                                          const GflDevice& params) {
    (void)state;
    GflOuterDerivatives d;
    d.dx_p = params.outer_ki * (params.p_sp - meas.p);
    d.dx_q = params.outer_ki * (params.q_sp - meas.q);
    d.dtheta_pll = params.pll_kp * meas.v_q_pll + state.x_pll;
    d.dx_pll = params.pll_ki * meas.v_q_pll;
    return d;
}

GfmDroopDerivatives gfm_droop_derivatives(const GfmDroopState& state, const GfmMeasurements& meas,
                                          const GfmDevice& params, double tau_e) {
    GfmDroopDerivatives d;
    d.ddelta = kOmegaBase * params.m_p * (params.p_sp - meas.p);
    d.de_mag = (params.e0 + params.n_q * (params.q_sp - meas.q) - state.e_mag) / tau_e;
    return d;
}

ResyncState resync_tracking(const ResyncState& state, double pcc_angle, double pcc_freq, double dt,
                            const ResyncGains& gains) {
    ResyncState out;
    const double decay_a = std::exp(-dt / gains.tau_angle);
    const double decay_f = std::exp(-dt / gains.tau_freq);
    // Track the angle along the shortest arc.
    double gap = state.delta - pcc_angle;
    gap = std::remainder(gap, 2.0 * kPi);
    out.delta = pcc_angle + gap * decay_a;
    out.omega = pcc_freq + (state.omega - pcc_freq) * decay_f;
    return out;
}

}  // namespace stvs::dev
