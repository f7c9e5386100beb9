#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

// Shared scalar types and error categories.
//
// Phasor convention used across the toolkit:
//  - xy components are the real/imaginary parts of a phasor in the
//    synchronous network frame, all quantities in per unit.
//  - A dq frame at angle theta satisfies  (u_d + j*u_q) = (u_x + j*u_y) * e^{-j*theta},
//    i.e. the d axis points along angle theta. A locked PLL therefore has
//    V_q = 0 and V_d = |V|.
//  - Device currents are injections into the network.

namespace stvs {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
// Angular base for droop/PLL integrators (50 Hz system).
inline constexpr double kOmegaBase = 2.0 * kPi * 50.0;

/// Input data failed validation (bad scenario, bad ids, bad parameter ranges).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
    ValidationError(const std::string& what, std::vector<std::string> details)
        : std::runtime_error(join(what, details)), details_(std::move(details)) {}

    const std::vector<std::string>& details() const { return details_; }

private:
    static std::string join(const std::string& head, const std::vector<std::string>& details) {
        std::string out = head;
        for (const auto& d : details) {
            out += "\n  - ";
            out += d;
        }
        return out;
    }
    std::vector<std::string> details_;
};

/// A numerical routine failed (singular matrix, divergence, non-finite state).
class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

/// Internal invariant broken; indicates a bug, not bad input.
class InternalError : public std::logic_error {
public:
    explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace stvs
