#pragma once

#include <string>

#include "stvs/common.hpp"
#include "stvs/scenario.hpp"

namespace stvs::dev {

// ---------------------------------------------------------------------------
// Frame helpers.  dq frame at angle theta: (u_d + j u_q) = (u_x + j u_y) e^{-j theta}.
// ---------------------------------------------------------------------------

struct DqPair {
    double d = 0.0;
    double q = 0.0;
};

inline DqPair xy_to_dq(Complex u, double theta) {
    const Complex r = u * std::polar(1.0, -theta);
    return {r.real(), r.imag()};
}

inline Complex dq_to_xy(DqPair u, double theta) {
    return Complex(u.d, u.q) * std::polar(1.0, theta);
}

// ---------------------------------------------------------------------------
// Synchronous-machine transient emulation
// ---------------------------------------------------------------------------

struct SmTransientModel {
    double e_q_prime = 1.0;
    double delta = 0.0;
    double x_d_prime = 0.1;
    double x_q = 0.1;
};

/// Norton injection of the transient machine model:
/// I = I'_D - V_Q/(j x'_d) - V_D/(j x_q), with I'_D = (E'_Q/x'_d) at angle (delta - 90 deg).
/// With x'_d = x_q this collapses to (E'_Q at delta - V) / (j x'_d).
Complex sm_norton_current(const SmTransientModel& sm, Complex v_terminal);

/// Improved GFL inner-loop reference synthesis in the device dq frame.
/// theta_dq is the angle between the device frame and the emulated machine
/// frame; with x_d_prime == x_q the cross terms vanish for any theta_dq and
/// the law reduces to I_d = I'_d - V_q/x'_d, I_q = I'_q + V_d/x'_d.
DqPair gfl_inner_reference(DqPair i_ref_outer, DqPair v_dq, double theta_dq, double x_d_prime,
                           double x_q);

/// xy-frame form of the GFL virtual shunt: I = I' + j b' V.
Complex gfl_norton_phasor(Complex i_internal, Complex v, double b_virtual);

/// GFM inner-loop voltage law, V = E - j x' I.
Complex gfm_terminal_voltage(Complex e_internal, Complex i, double x_virtual);

/// Inverse of gfm_terminal_voltage: I = (E - V) / (j x').
Complex gfm_current_from_voltage(Complex e_internal, Complex v, double x_virtual);

// ---------------------------------------------------------------------------
// Baseline (common) FRT comparator
// ---------------------------------------------------------------------------

struct LvrtBaselineParams {
    double k_q = 2.0;          // reactive gain on the sag depth
    double i_d_prefault = 0.0; // active current carried before the fault
    double i_max = 1.2;
};

struct LvrtReference {
    double i_d = 0.0;
    double i_q = 0.0;  // reactive injection magnitude (>= 0)
};

/// Common LVRT law: I_q = clamp(k_q (0.9 - V_filt), 0, i_max),
/// I_d = min(I_d_prefault, sqrt(i_max^2 - I_q^2)).
LvrtReference gfl_lvrt_baseline(double v_mag_filtered, const LvrtBaselineParams& params);

// ---------------------------------------------------------------------------
// FRT mode switching
// ---------------------------------------------------------------------------

enum class Mode { Normal = 1, Frt = 2, Recovery = 3 };

std::string to_string(Mode m);

struct ModeThresholds {
    double v_enter = 0.8;   // filtered |V| below this: Normal -> Frt
    double v_exit = 0.85;   // filtered |V| above this: Frt -> Recovery
};

struct ModeTransition {
    Mode from = Mode::Normal;
    Mode to = Mode::Normal;
    double time = 0.0;
    std::string cause;
};

struct ControlMode {
    Mode mode = Mode::Normal;
    double entered_at = 0.0;
};

/// One evaluation of the switching logic. `ref_gap` is the distance between
/// the transitioning references and their pre-freeze values (used only for
/// the Recovery -> Normal exit). Returns the transition taken, if any.
std::optional<ModeTransition> frt_mode_step(ControlMode& state, double v_mag_filtered, double t,
                                            const ModeThresholds& thresholds,
                                            double recovery_tolerance, double ref_gap);

/// Exponential hand-back of a frozen reference toward its pre-freeze value.
double recovery_reference(double ref_frozen, double ref_prefreeze, double dt_since_clear,
                          double tau_rec);

// ---------------------------------------------------------------------------
// Mode-1 outer-loop dynamics
// ---------------------------------------------------------------------------

struct GflOuterState {
    double x_p = 0.0;      // integral state of the P loop (drives I'_d)
    double x_q = 0.0;      // integral state of the Q loop (drives -I'_q)
    double theta_pll = 0.0;
    double x_pll = 0.0;    // PLL integral state (frequency offset)
};

struct GflMeasurements {
    double p = 0.0;
    double q = 0.0;
    double v_q_pll = 0.0;  // terminal voltage q component in the PLL frame
};

struct GflOuterDerivatives {
    double dx_p = 0.0;
    double dx_q = 0.0;
    double dtheta_pll = 0.0;
    double dx_pll = 0.0;
};

/// PI outer loops on the power errors plus PLL dynamics driving V_q -> 0.
/// The synthesized internal current reference is
///   I'_d = kp (P_sp - P) + x_p,   I'_q = -(kp (Q_sp - Q) + x_q),
/// so a positive reactive shortfall pushes I_q negative (reactive injection).
GflOuterDerivatives gfl_outer_derivatives(const GflOuterState& state, const GflMeasurements& meas,
                                          const GflDevice& params);

inline DqPair gfl_internal_reference(const GflOuterState& state, const GflMeasurements& meas,
                                     const GflDevice& params) {
    return {params.outer_kp * (params.p_sp - meas.p) + state.x_p,
            -(params.outer_kp * (params.q_sp - meas.q) + state.x_q)};
}

struct GfmDroopState {
    double delta = 0.0;
    double e_mag = 1.0;
};

struct GfmMeasurements {
    double p = 0.0;
    double q = 0.0;
};

struct GfmDroopDerivatives {
    double ddelta = 0.0;
    double de_mag = 0.0;
};

/// Frequency droop on the angle, voltage droop through a first-order filter:
///   d delta/dt = omega0 m_p (P_sp - P),
///   dE/dt = (e0 + n_q (Q_sp - Q) - E) / tau_e.
GfmDroopDerivatives gfm_droop_derivatives(const GfmDroopState& state, const GfmMeasurements& meas,
                                          const GfmDevice& params, double tau_e);

/// Mode-3 resynchronization: delta and the internal frequency decay
/// exponentially toward the PCC phase angle and frequency.
struct ResyncGains {
    double tau_angle = 0.05;
    double tau_freq = 0.05;
};

struct ResyncState {
    double delta = 0.0;
    double omega = 0.0;  // internal frequency deviation (rad/s)
};

ResyncState resync_tracking(const ResyncState& state, double pcc_angle, double pcc_freq, double dt,
                            const ResyncGains& gains);

}  // namespace stvs::dev
