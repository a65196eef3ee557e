#pragma once

// Reference computations that share no code with the library.

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Inverse by explicit cofactor expansion.
Eigen::Matrix3d cofactor_inverse(const Eigen::Matrix3d& m);

/// Potential at p of a cube of unit charge density, centred at the origin
/// with half-edge h (closed-form volume integral of 1/r).
double cube_potential(const Eigen::Vector3d& p, double h);

/// Unit point charges on a simple cubic lattice of edge L plus a uniform
/// neutralizing background, summed as neutral cubes over |n|_inf <= m and
/// shifted to the zero-mean gauge. Returns the potential (units of 1/length)
/// at r; with `self` true, r must be 0 and the bare 1/r term of the central
/// charge is dropped.
double cubic_image_sum(double L, const Eigen::Vector3d& r, int m, bool self);

/// Two-point Richardson extrapolation for an error ~ 1/m^2 at m and 2m.
inline double richardson(double at_m, double at_2m) { return (4.0 * at_2m - at_m) / 3.0; }

/// <2p_z| z |1s> of hydrogen in Bohr, by composite Simpson quadrature of
/// the radial integral times the angular factor 1/sqrt(3).
double hydrogen_1s_2pz_dipole_bohr();

/// Pointwise minimum over lines c_q + q x.
double lower_envelope(const std::vector<std::pair<int, double>>& lines, double x);

/// First sign change of f on [lo, hi] scanned with `step`, refined by
/// bisection to 1e-12.
double scan_root(const std::function<double(double)>& f, double lo, double hi, double step);

}  // namespace oracle
