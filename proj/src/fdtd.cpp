#include "wgmcav/fdtd.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <type_traits>

#include <Eigen/LU>

#include "wgmcav/errors.hpp"
#include "wgmcav/harminv.hpp"
#include "wgmcav/units.hpp"

namespace wgmcav
{
namespace
{
using Index = Eigen::Index;
constexpr double kTwoPi = 2.0 * units::kPi;

double average_clamped(const Eigen::ArrayXXd &eps, Index i0, Index i1, Index k0, Index k1)
{
    // Mean over the cells (i, k) with i ∈ {i0, i1}, k ∈ {k0, k1}, clamped to the grid.
    const Index nr = eps.rows(), nz = eps.cols();
    double sum = 0.0;
    int count = 0;
    for (Index i : {i0, i1})
        for (Index k : {k0, k1}) {
            const Index ic = std::clamp<Index>(i, 0, nr - 1);
            const Index kc = std::clamp<Index>(k, 0, nz - 1);
            sum += eps(ic, kc);
            ++count;
        }
    return sum / count;
}

struct CpmlProfile
{
    double b = 1.0;
    double a = 0.0;
};

// depth ∈ [0, 1] measured into the absorbing layer.
CpmlProfile cpml_at(double depth, const PmlSpec &spec, double thickness, double dt)
{
    if (depth <= 0.0)
        return {};
    depth = std::min(depth, 1.0);
    const double p = spec.grading_order;
    const double sigma_max = -(p + 1.0) * std::log(spec.target_reflection) / (2.0 * thickness);
    const double sigma = sigma_max * std::pow(depth, p);
    const double alpha = spec.cfs_alpha * (1.0 - depth);
    CpmlProfile out;
    out.b = std::exp(-(sigma + alpha) * dt);
    out.a = (sigma + alpha) > 0.0 ? sigma / (sigma + alpha) * (out.b - 1.0) : 0.0;
    return out;
}

template <typename Scalar>
Operators<Scalar> build_operators(const IndexMap &map, int m, double dt, const PmlSpec *pml)
{
    Operators<Scalar> ops;
    const Index nr = map.nr(), nz = map.nz();
    ops.nr = nr;
    ops.nz = nz;
    ops.dr = map.dr;
    ops.dz = map.dz;
    ops.dt = dt;
    ops.m = m;
    ops.axis = map.r_min <= 0.0;

    ops.r_int.resize(nr + 1);
    ops.m_over_r_int.resize(nr + 1);
    ops.inv_r_int.resize(nr + 1);
    for (Index i = 0; i <= nr; ++i) {
        const double r = map.r_min + static_cast<double>(i) * map.dr;
        ops.r_int(i) = r;
        ops.m_over_r_int(i) = r > 0.0 ? m / r : 0.0;
        ops.inv_r_int(i) = r > 0.0 ? 1.0 / r : 0.0;
    }
    ops.r_half.resize(nr);
    ops.m_over_r_half.resize(nr);
    ops.inv_r_half.resize(nr);
    for (Index i = 0; i < nr; ++i) {
        const double r = map.r_min + (static_cast<double>(i) + 0.5) * map.dr;
        ops.r_half(i) = r;
        ops.m_over_r_half(i) = m / r;
        ops.inv_r_half(i) = 1.0 / r;
    }

    ops.eps_r.resize(nr, nz + 1);
    for (Index k = 0; k <= nz; ++k)
        for (Index i = 0; i < nr; ++i)
            ops.eps_r(i, k) = average_clamped(map.eps, i, i, k - 1, k);
    ops.eps_p.resize(nr + 1, nz + 1);
    for (Index k = 0; k <= nz; ++k)
        for (Index i = 0; i <= nr; ++i)
            ops.eps_p(i, k) = average_clamped(map.eps, i - 1, i, k - 1, k);
    ops.eps_z.resize(nr + 1, nz);
    for (Index k = 0; k < nz; ++k)
        for (Index i = 0; i <= nr; ++i)
            ops.eps_z(i, k) = average_clamped(map.eps, i - 1, i, k, k);
    ops.ce_r = dt / ops.eps_r;
    ops.ce_p = dt / ops.eps_p;
    ops.ce_z = dt / ops.eps_z;

    const int cells = pml ? pml->cells : 0;
    ops.pml = cells;
    ops.b_r_int = Operators<Scalar>::Column::Ones(nr + 1);
    ops.a_r_int = Operators<Scalar>::Column::Zero(nr + 1);
    ops.b_r_half = Operators<Scalar>::Column::Ones(nr);
    ops.a_r_half = Operators<Scalar>::Column::Zero(nr);
    ops.b_z_int = Operators<Scalar>::Row::Ones(nz + 1);
    ops.a_z_int = Operators<Scalar>::Row::Zero(nz + 1);
    ops.b_z_half = Operators<Scalar>::Row::Ones(nz);
    ops.a_z_half = Operators<Scalar>::Row::Zero(nz);
    if (cells > 0) {
        const double thick_r = cells * map.dr;
        const double thick_z = cells * map.dz;
        const double r_edge = static_cast<double>(nr - cells); // in cell units
        for (Index i = 0; i <= nr; ++i) {
            const auto c = cpml_at((static_cast<double>(i) - r_edge) / cells, *pml, thick_r, dt);
            ops.b_r_int(i) = c.b;
            ops.a_r_int(i) = c.a;
        }
        for (Index i = 0; i < nr; ++i) {
            const auto c = cpml_at((static_cast<double>(i) + 0.5 - r_edge) / cells, *pml, thick_r, dt);
            ops.b_r_half(i) = c.b;
            ops.a_r_half(i) = c.a;
        }
        auto z_depth = [&](double k) {
            const double bottom = (static_cast<double>(cells) - k) / cells;
            const double top = (k - static_cast<double>(nz - cells)) / cells;
            return std::max(bottom, top);
        };
        for (Index k = 0; k <= nz; ++k) {
            const auto c = cpml_at(z_depth(static_cast<double>(k)), *pml, thick_z, dt);
            ops.b_z_int(k) = c.b;
            ops.a_z_int(k) = c.a;
        }
        for (Index k = 0; k < nz; ++k) {
            const auto c = cpml_at(z_depth(static_cast<double>(k) + 0.5), *pml, thick_z, dt);
            ops.b_z_half(k) = c.b;
            ops.a_z_half(k) = c.a;
        }
    }
    return ops;
}

template <typename Scalar>
void allocate(FieldSet<Scalar> &f, Index nr, Index nz)
{
    using Field = typename FieldSet<Scalar>::Field;
    f.er = Field::Zero(nr, nz + 1);
    f.ep = Field::Zero(nr + 1, nz + 1);
    f.ez = Field::Zero(nr + 1, nz);
    f.hr = Field::Zero(nr + 1, nz);
    f.hp = Field::Zero(nr, nz);
    f.hz = Field::Zero(nr, nz + 1);
    f.psi_hr_z = Field::Zero(nr + 1, nz);
    f.psi_hp_z = Field::Zero(nr, nz);
    f.psi_hp_r = Field::Zero(nr, nz);
    f.psi_hz_r = Field::Zero(nr, nz + 1);
    f.psi_er_z = Field::Zero(nr, nz + 1);
    f.psi_ep_z = Field::Zero(nr + 1, nz + 1);
    f.psi_ep_r = Field::Zero(nr + 1, nz + 1);
    f.psi_ez_r = Field::Zero(nr + 1, nz);
}

// Column ranges [first, first + count) covered by the bottom and top z layers.
struct Span1
{
    Index first;
    Index count;
};

std::vector<Span1> z_slabs(Index lo, Index hi, Index pml, Index n_half_or_int)
{
    // lo/hi: valid index range of the derivative array; pml: layer cells.
    std::vector<Span1> out;
    if (pml <= 0)
        return out;
    const Index b1 = std::min(hi, lo + pml + 1);
    if (b1 > lo)
        out.push_back({lo, b1 - lo});
    const Index t0 = std::max(b1, n_half_or_int - pml - 1);
    if (hi > t0)
        out.push_back({t0, hi - t0});
    return out;
}

// H^{n-½} → H^{n+½} from E^n.
template <typename Scalar>
void update_h(const Operators<Scalar> &o, FieldSet<Scalar> &f)
{
    const Index nr = o.nr, nz = o.nz;
    const double dt = o.dt, dr = o.dr, dz = o.dz;

    const double inv_dr = 1.0 / dr, inv_dz = 1.0 / dz;
    const auto r_hi = o.r_int.tail(nr);
    const auto r_lo = o.r_int.head(nr);
    for (Index k = 0; k < nz; ++k) {
        // H_r (i, k+½): ∂t = -(m/r) E_z + ∂z E_φ
        f.hr.col(k) += dt * ((f.ep.col(k + 1) - f.ep.col(k)) * inv_dz - f.ez.col(k) * o.m_over_r_int);
        // H_φ (i+½, k+½): ∂t = -∂z E_r + ∂r E_z
        f.hp.col(k) += dt * ((f.ez.col(k).tail(nr) - f.ez.col(k).head(nr)) * inv_dr -
                             (f.er.col(k + 1) - f.er.col(k)) * inv_dz);
    }
    for (Index k = 0; k <= nz; ++k) {
        // H_z (i+½, k): ∂t = -(1/r) ∂r(r E_φ) + (m/r) E_r
        f.hz.col(k) += dt * (f.er.col(k) * o.m_over_r_half -
                             (f.ep.col(k).tail(nr) * r_hi - f.ep.col(k).head(nr) * r_lo) * o.inv_r_half * inv_dr);
    }

    if (o.pml <= 0)
        return;
    const Index p = o.pml;
    for (const auto &s : z_slabs(0, nz, p, nz)) {
        auto d_ep = ((f.ep.middleCols(s.first + 1, s.count) - f.ep.middleCols(s.first, s.count)) / dz).eval();
        auto psi = f.psi_hr_z.middleCols(s.first, s.count);
        psi = psi.rowwise() * o.b_z_half.segment(s.first, s.count) + d_ep.rowwise() * o.a_z_half.segment(s.first, s.count);
        f.hr.middleCols(s.first, s.count) += dt * psi;

        auto d_er = ((f.er.middleCols(s.first + 1, s.count) - f.er.middleCols(s.first, s.count)) / dz).eval();
        auto psi2 = f.psi_hp_z.middleCols(s.first, s.count);
        psi2 = psi2.rowwise() * o.b_z_half.segment(s.first, s.count) + d_er.rowwise() * o.a_z_half.segment(s.first, s.count);
        f.hp.middleCols(s.first, s.count) -= dt * psi2;
    }
    const Index r0 = std::max<Index>(0, nr - p - 1);
    const Index rn = nr - r0;
    {
        auto d_ez = ((f.ez.middleRows(r0 + 1, rn) - f.ez.middleRows(r0, rn)) / dr).eval();
        auto psi = f.psi_hp_r.middleRows(r0, rn);
        psi = psi.colwise() * o.b_r_half.segment(r0, rn) + d_ez.colwise() * o.a_r_half.segment(r0, rn);
        f.hp.middleRows(r0, rn) += dt * psi;

        auto d_rep = (((f.ep.middleRows(r0 + 1, rn).colwise() * o.r_int.segment(r0 + 1, rn)) -
                       (f.ep.middleRows(r0, rn).colwise() * o.r_int.segment(r0, rn))) /
                      dr)
                         .eval();
        auto psi2 = f.psi_hz_r.middleRows(r0, rn);
        psi2 = psi2.colwise() * o.b_r_half.segment(r0, rn) + d_rep.colwise() * o.a_r_half.segment(r0, rn);
        f.hz.middleRows(r0, rn) -= dt * (psi2.colwise() * o.inv_r_half.segment(r0, rn));
    }
}

// E^n → E^{n+1} from H^{n+½} (source handled by the caller).
template <typename Scalar>
void update_e(const Operators<Scalar> &o, FieldSet<Scalar> &f)
{
    const Index nr = o.nr, nz = o.nz;
    const double dr = o.dr, dz = o.dz;

    const double inv_dr = 1.0 / dr, inv_dz = 1.0 / dz;
    for (Index k = 1; k < nz; ++k) {
        // E_r (i+½, k): ε∂t = -(m/r) H_z - ∂z H_φ
        f.er.col(k) -= o.ce_r.col(k) * (f.hz.col(k) * o.m_over_r_half + (f.hp.col(k) - f.hp.col(k - 1)) * inv_dz);
    }
    if (nr > 1) {
        const auto ri = o.inv_r_int.segment(1, nr - 1);
        const auto mr = o.m_over_r_int.segment(1, nr - 1);
        const auto rh_hi = o.r_half.tail(nr - 1);
        const auto rh_lo = o.r_half.head(nr - 1);
        for (Index k = 1; k < nz; ++k) {
            // E_φ (i, k): ε∂t = ∂z H_r - ∂r H_z
            f.ep.col(k).segment(1, nr - 1) +=
                o.ce_p.col(k).segment(1, nr - 1) *
                ((f.hr.col(k).segment(1, nr - 1) - f.hr.col(k - 1).segment(1, nr - 1)) * inv_dz -
                 (f.hz.col(k).tail(nr - 1) - f.hz.col(k).head(nr - 1)) * inv_dr);
        }
        for (Index k = 0; k < nz; ++k) {
            // E_z (i, k+½): ε∂t = (1/r) ∂r(r H_φ) + (m/r) H_r
            f.ez.col(k).segment(1, nr - 1) +=
                o.ce_z.col(k).segment(1, nr - 1) *
                ((f.hp.col(k).tail(nr - 1) * rh_hi - f.hp.col(k).head(nr - 1) * rh_lo) * ri * inv_dr +
                 f.hr.col(k).segment(1, nr - 1) * mr);
        }
    }
    if (o.axis && o.m == 0) {
        // Ampère around the axis cell of radius dr/2.
        f.ez.row(0) += o.ce_z.row(0) * f.hp.row(0) * (4.0 / dr);
    }

    if (o.pml <= 0)
        return;
    const Index p = o.pml;
    for (const auto &s : z_slabs(1, nz, p, nz)) {
        auto d_hp = ((f.hp.middleCols(s.first, s.count) - f.hp.middleCols(s.first - 1, s.count)) / dz).eval();
        auto psi = f.psi_er_z.middleCols(s.first, s.count);
        psi = psi.rowwise() * o.b_z_int.segment(s.first, s.count) + d_hp.rowwise() * o.a_z_int.segment(s.first, s.count);
        f.er.middleCols(s.first, s.count) -= o.ce_r.middleCols(s.first, s.count) * psi;

        if (nr > 1) {
            auto d_hr = ((f.hr.block(1, s.first, nr - 1, s.count) - f.hr.block(1, s.first - 1, nr - 1, s.count)) / dz).eval();
            auto psi2 = f.psi_ep_z.block(1, s.first, nr - 1, s.count);
            psi2 = psi2.rowwise() * o.b_z_int.segment(s.first, s.count) + d_hr.rowwise() * o.a_z_int.segment(s.first, s.count);
            f.ep.block(1, s.first, nr - 1, s.count) += o.ce_p.block(1, s.first, nr - 1, s.count) * psi2;
        }
    }
    const Index r0 = std::max<Index>(1, nr - p - 1);
    const Index rn = nr - r0;
    if (rn > 0) {
        if (nz > 1) {
            auto d_hz = ((f.hz.block(r0, 1, rn, nz - 1) - f.hz.block(r0 - 1, 1, rn, nz - 1)) / dr).eval();
            auto psi = f.psi_ep_r.block(r0, 1, rn, nz - 1);
            psi = psi.colwise() * o.b_r_int.segment(r0, rn) + d_hz.colwise() * o.a_r_int.segment(r0, rn);
            f.ep.block(r0, 1, rn, nz - 1) -= o.ce_p.block(r0, 1, rn, nz - 1) * psi;
        }
        auto d_rhp = (((f.hp.middleRows(r0, rn).colwise() * o.r_half.segment(r0, rn)) -
                       (f.hp.middleRows(r0 - 1, rn).colwise() * o.r_half.segment(r0 - 1, rn))) /
                      dr)
                         .eval();
        auto psi2 = f.psi_ez_r.middleRows(r0, rn);
        psi2 = psi2.colwise() * o.b_r_int.segment(r0, rn) + d_rhp.colwise() * o.a_r_int.segment(r0, rn);
        f.ez.middleRows(r0, rn) += o.ce_z.middleRows(r0, rn) * (psi2.colwise() * o.inv_r_int.segment(r0, rn));
    }
}

template <typename Scalar>
double weighted_norm2(const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> &a, const Eigen::ArrayXd &w)
{
    return (a.abs2().colwise() * w).sum();
}

Eigen::ArrayXd axis_weights(const Operators<double> &o)
{
    Eigen::ArrayXd w = o.r_int;
    if (o.axis)
        w(0) = o.dr / 8.0;
    return w;
}

} // namespace

const char *to_string(FieldComponent c)
{
    switch (c) {
    case FieldComponent::er:
        return "er";
    case FieldComponent::ep:
        return "ep";
    case FieldComponent::ez:
        return "ez";
    case FieldComponent::hr:
        return "hr";
    case FieldComponent::hp:
        return "hp";
    case FieldComponent::hz:
        return "hz";
    }
    return "?";
}

FieldComponent field_component_from_string(const std::string &name)
{
    for (auto c : {FieldComponent::er, FieldComponent::ep, FieldComponent::ez, FieldComponent::hr, FieldComponent::hp,
                   FieldComponent::hz})
        if (name == to_string(c))
            return c;
    throw ValidationError("component", "unknown field component '" + name + "'");
}

std::pair<Index, Index> yee_index(const IndexMap &map, FieldComponent c, double r, double z)
{
    const double x = (r - map.r_min) / map.dr;
    const double y = (z - map.z_min) / map.dz;
    const bool r_half = c == FieldComponent::er || c == FieldComponent::hz || c == FieldComponent::hp;
    const bool z_half = c == FieldComponent::ez || c == FieldComponent::hr || c == FieldComponent::hp;
    const Index nr_c = map.nr() + (r_half ? 0 : 1);
    const Index nz_c = map.nz() + (z_half ? 0 : 1);
    const Index i = std::clamp<Index>(static_cast<Index>(std::lround(r_half ? x - 0.5 : x)), 0, nr_c - 1);
    const Index k = std::clamp<Index>(static_cast<Index>(std::lround(z_half ? y - 0.5 : y)), 0, nz_c - 1);
    return {i, k};
}

void require_outside_pml(const IndexMap &map, int pml_cells, double r, double z, const std::string &what)
{
    const double r_lim = map.r_max() - pml_cells * map.dr;
    const double z_lo = map.z_min + pml_cells * map.dz;
    const double z_hi = map.z_max() - pml_cells * map.dz;
    if (r < map.r_min || r > map.r_max() || z < map.z_min || z > map.z_max())
        throw ValidationError(what, what + " lies outside the simulation grid");
    if (r >= r_lim || z <= z_lo || z >= z_hi)
        throw ValidationError(what, what + " lies inside the PML");
}

double default_time_step(const IndexMap &map, int m, double courant)
{
    const double r_ref = map.r_min > 0.0 ? map.r_min : 0.5 * map.dr;
    const double stiffness = std::max(1.0, m * map.dr / r_ref);
    return courant * std::min(map.dr, map.dz) / stiffness;
}

double max_stable_dt(const IndexMap &map, int m)
{
    // K = ε⁻¹ C_H C_E is self-adjoint and positive in the ε r-weighted inner
    // product; leapfrog is stable while dt ≤ 2 / sqrt(λ_max(K)).
    const auto ops = build_operators<double>(map, m, 1.0, nullptr);
    FieldSet<double> f;
    allocate(f, ops.nr, ops.nz);
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto fill = [&](Eigen::ArrayXXd &a, int parity) {
        for (Index k = 0; k < a.cols(); ++k)
            for (Index i = 0; i < a.rows(); ++i)
                a(i, k) = (((i + k + parity) % 2) ? 1.0 : -1.0) + 0.3 * u(rng);
    };
    fill(f.er, 0);
    fill(f.ep, 1);
    fill(f.ez, 1);
    const Eigen::ArrayXd w_half = ops.r_half;
    const Eigen::ArrayXd w_int = axis_weights(ops);
    auto e_norm2 = [&](const FieldSet<double> &s) {
        return weighted_norm2(Eigen::ArrayXXd(s.er * ops.eps_r.sqrt()), w_half) +
               weighted_norm2(Eigen::ArrayXXd(s.ep * ops.eps_p.sqrt()), w_int) +
               weighted_norm2(Eigen::ArrayXXd(s.ez * ops.eps_z.sqrt()), w_int);
    };
    auto clean = [&](FieldSet<double> &s) {
        // Keep only interior degrees of freedom.
        s.er.col(0).setZero();
        s.er.col(ops.nz).setZero();
        s.ep.row(0).setZero();
        s.ep.row(ops.nr).setZero();
        s.ep.col(0).setZero();
        s.ep.col(ops.nz).setZero();
        if (!(ops.axis && m == 0))
            s.ez.row(0).setZero();
        s.ez.row(ops.nr).setZero();
    };
    clean(f);
    double lambda = 0.0;
    FieldSet<double> work;
    allocate(work, ops.nr, ops.nz);
    for (int it = 0; it < 150; ++it) {
        const double n0 = e_norm2(f);
        work.er = f.er;
        work.ep = f.ep;
        work.ez = f.ez;
        work.hr.setZero();
        work.hp.setZero();
        work.hz.setZero();
        update_h(ops, work); // H = -C_E E
        work.er.setZero();
        work.ep.setZero();
        work.ez.setZero();
        update_e(ops, work); // E = -K E
        clean(work);
        // Rayleigh quotient <v, K v> / <v, v>.
        const double num = -((f.er * work.er * ops.eps_r).colwise() * w_half).sum() -
                           ((f.ep * work.ep * ops.eps_p).colwise() * w_int).sum() -
                           ((f.ez * work.ez * ops.eps_z).colwise() * w_int).sum();
        lambda = std::max(lambda, num / n0);
        const double n1 = std::sqrt(e_norm2(work));
        if (!(n1 > 0.0))
            break;
        f.er = -work.er / n1;
        f.ep = -work.ep / n1;
        f.ez = -work.ez / n1;
    }
    return 2.0 / std::sqrt(lambda);
}

template <typename Scalar>
Simulation<Scalar>::Simulation(SimConfig config) : config_(std::move(config))
{
    const IndexMap &map = config_.index_map;
    if (config_.m < 0)
        throw ValidationError("m", "azimuthal number m must be non-negative");
    if (map.nr() < 2 || map.nz() < 2)
        throw ValidationError("index_map", "index map must have at least 2x2 cells");
    if (config_.pml.cells < 0 || 2 * config_.pml.cells >= map.nz() || config_.pml.cells >= map.nr())
        throw ValidationError("pml", "PML does not fit in the grid");
    if (!(config_.courant > 0.0))
        throw ValidationError("courant", "Courant factor must be positive");
    if (config_.steps_after_source < 0)
        throw ValidationError("steps_after_source", "steps_after_source must be non-negative");
    if (!(config_.source.center_thz > 0.0) || !(config_.source.width_thz > 0.0))
        throw ValidationError("source", "source frequency and width must be positive");

    const double dt = default_time_step(map, config_.m, config_.courant);
    const double dt_limit = max_stable_dt(map, config_.m);
    if (dt > 0.98 * dt_limit) {
        std::ostringstream os;
        os << "unstable Courant factor " << config_.courant << ": dt = " << dt << " exceeds the stability limit "
           << dt_limit << " for m = " << config_.m;
        throw ValidationError("courant", os.str());
    }

    require_outside_pml(map, config_.pml.cells, config_.source.r, config_.source.z, "source");
    for (const auto &p : config_.probes)
        require_outside_pml(map, config_.pml.cells, p.r, p.z, "probe '" + p.id + "'");
    if constexpr (std::is_same_v<Scalar, double>) {
        if (config_.source.amplitude.imag() != 0.0)
            throw ValidationError("source", "complex source amplitude requires the complex engine");
    }

    ops_ = build_operators<Scalar>(map, config_.m, dt, config_.pml.cells > 0 ? &config_.pml : nullptr);
    allocate(fields_, ops_.nr, ops_.nz);

    f0_ = units::thz_to_engine_frequency(config_.source.center_thz);
    sigma_t_ = 1.0 / (kTwoPi * units::thz_to_engine_frequency(config_.source.width_thz));
    t_peak_ = 5.0 * sigma_t_;
    const double off = config_.source.turn_off_ps ? units::ps_to_engine_time(*config_.source.turn_off_ps)
                                                  : 2.0 * t_peak_;
    source_steps_ = static_cast<long>(std::ceil(off / dt));

    const FieldComponent c = config_.source.orientation == Orientation::radial      ? FieldComponent::er
                             : config_.source.orientation == Orientation::azimuthal ? FieldComponent::ep
                                                                                    : FieldComponent::ez;
    std::tie(src_i_, src_k_) = yee_index(map, c, config_.source.r, config_.source.z);
}

template <typename Scalar>
double Simulation<Scalar>::dt_ps() const
{
    return units::engine_time_to_ps(ops_.dt);
}

template <typename Scalar>
double Simulation<Scalar>::source_waveform(double t) const
{
    const double x = (t - t_peak_) / sigma_t_;
    return std::exp(-0.5 * x * x) * std::cos(kTwoPi * f0_ * (t - t_peak_));
}

template <typename Scalar>
void Simulation<Scalar>::step()
{
    update_h(ops_, fields_);
    update_e(ops_, fields_);
    if (step_ < source_steps_) {
        const double t_half = (static_cast<double>(step_) + 0.5) * ops_.dt;
        Scalar amp;
        if constexpr (std::is_same_v<Scalar, double>)
            amp = config_.source.amplitude.real();
        else
            amp = config_.source.amplitude;
        const Scalar j = amp * source_waveform(t_half);
        switch (config_.source.orientation) {
        case Orientation::radial:
            fields_.er(src_i_, src_k_) -= ops_.ce_r(src_i_, src_k_) * j;
            break;
        case Orientation::azimuthal:
            fields_.ep(src_i_, src_k_) -= ops_.ce_p(src_i_, src_k_) * j;
            break;
        case Orientation::axial:
            fields_.ez(src_i_, src_k_) -= ops_.ce_z(src_i_, src_k_) * j;
            break;
        }
    }
    ++step_;
    if (config_.check_finite && (step_ % 256) == 0 && !all_finite())
        throw NumericalError("non-finite field values at step " + std::to_string(step_));
}

template <typename Scalar>
const typename Simulation<Scalar>::Field &Simulation<Scalar>::field(FieldComponent c) const
{
    switch (c) {
    case FieldComponent::er:
        return fields_.er;
    case FieldComponent::ep:
        return fields_.ep;
    case FieldComponent::ez:
        return fields_.ez;
    case FieldComponent::hr:
        return fields_.hr;
    case FieldComponent::hp:
        return fields_.hp;
    case FieldComponent::hz:
        break;
    }
    return fields_.hz;
}

template <typename Scalar>
double Simulation<Scalar>::energy() const
{
    Eigen::ArrayXd w_int = ops_.r_int.real();
    if (ops_.axis)
        w_int(0) = ops_.dr / 8.0;
    const Eigen::ArrayXd w_half = ops_.r_half.real();
    const double e = ((fields_.er.abs2() * ops_.eps_r.real()).colwise() * w_half).sum() +
                     ((fields_.ep.abs2() * ops_.eps_p.real()).colwise() * w_int).sum() +
                     ((fields_.ez.abs2() * ops_.eps_z.real()).colwise() * w_int).sum();
    const double h = (fields_.hr.abs2().colwise() * w_int).sum() + (fields_.hp.abs2().colwise() * w_half).sum() +
                     (fields_.hz.abs2().colwise() * w_half).sum();
    return kTwoPi * ops_.dr * ops_.dz * (e + h);
}

template <typename Scalar>
double Simulation<Scalar>::conserved_energy() const
{
    FieldSet<Scalar> next = fields_;
    update_h(ops_, next);
    Eigen::ArrayXd w_int = ops_.r_int.real();
    if (ops_.axis)
        w_int(0) = ops_.dr / 8.0;
    const Eigen::ArrayXd w_half = ops_.r_half.real();
    const double e = ((fields_.er.abs2() * ops_.eps_r.real()).colwise() * w_half).sum() +
                     ((fields_.ep.abs2() * ops_.eps_p.real()).colwise() * w_int).sum() +
                     ((fields_.ez.abs2() * ops_.eps_z.real()).colwise() * w_int).sum();
    auto cross = [](const Field &a, const Field &b) { return (a.conjugate() * b).real(); };
    const double h = (cross(fields_.hr, next.hr).colwise() * w_int).sum() +
                     (cross(fields_.hp, next.hp).colwise() * w_half).sum() +
                     (cross(fields_.hz, next.hz).colwise() * w_half).sum();
    return kTwoPi * ops_.dr * ops_.dz * (e + h);
}

template <typename Scalar>
Scalar Simulation<Scalar>::probe_value(const ProbeSpec &probe, FieldComponent c) const
{
    const auto [i, k] = yee_index(config_.index_map, c, probe.r, probe.z);
    return field(c)(i, k);
}

template <typename Scalar>
bool Simulation<Scalar>::all_finite() const
{
    return fields_.er.allFinite() && fields_.ep.allFinite() && fields_.ez.allFinite() && fields_.hr.allFinite() &&
           fields_.hp.allFinite() && fields_.hz.allFinite();
}

template class Simulation<double>;
template class Simulation<std::complex<double>>;

Simulation<double> init_simulation(const SimConfig &config) { return Simulation<double>(config); }

namespace
{
bool is_real_run(const SimConfig &config) { return config.source.amplitude.imag() == 0.0; }

template <typename Scalar>
std::vector<TimeSeries> make_series(const Simulation<Scalar> &sim)
{
    std::vector<TimeSeries> out;
    for (const auto &p : sim.config().probes)
        for (auto c : p.components) {
            TimeSeries ts;
            ts.probe_id = p.id;
            ts.component = c;
            ts.dt_ps = sim.dt_ps();
            ts.samples.reserve(static_cast<std::size_t>(sim.config().steps_after_source));
            out.push_back(std::move(ts));
        }
    return out;
}

template <typename Scalar>
void record(const Simulation<Scalar> &sim, std::vector<TimeSeries> &series)
{
    std::size_t j = 0;
    for (const auto &p : sim.config().probes)
        for (auto c : p.components) {
            const std::complex<double> v(sim.probe_value(p, c));
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw NumericalError("simulation diverged at step " + std::to_string(sim.step_index()));
            if (series[j].samples.empty())
                series[j].t0_ps = sim.time() / units::kSpeedOfLight;
            series[j++].samples.push_back(v);
        }
}

template <typename Scalar>
std::vector<TimeSeries> ringdown_impl(const SimConfig &config)
{
    Simulation<Scalar> sim(config);
    auto series = make_series(sim);
    const long total = sim.total_steps();
    while (sim.step_index() < total) {
        sim.step();
        if (sim.step_index() > sim.source_steps())
            record(sim, series);
    }
    if (!sim.all_finite())
        throw NumericalError("simulation diverged");
    return series;
}

Eigen::ArrayXXcd to_cell_centres_r(const Eigen::ArrayXXcd &er)
{
    // E_r (i+½, k) → (i+½, k+½)
    const Index nz = er.cols() - 1;
    return 0.5 * (er.leftCols(nz) + er.rightCols(nz));
}

Eigen::ArrayXXcd to_cell_centres_z(const Eigen::ArrayXXcd &ez)
{
    const Index nr = ez.rows() - 1;
    return 0.5 * (ez.topRows(nr) + ez.bottomRows(nr));
}

Eigen::ArrayXXcd to_cell_centres_p(const Eigen::ArrayXXcd &ep)
{
    const Index nr = ep.rows() - 1, nz = ep.cols() - 1;
    return 0.25 * (ep.block(0, 0, nr, nz) + ep.block(1, 0, nr, nz) + ep.block(0, 1, nr, nz) + ep.block(1, 1, nr, nz));
}

void normalise(ModeProfile &p)
{
    const Eigen::ArrayXXd intensity = p.intensity();
    Index imax = 0, kmax = 0;
    const double peak = intensity.maxCoeff(&imax, &kmax);
    if (!(peak > 0.0))
        return;
    std::complex<double> ref = p.er(imax, kmax);
    if (std::abs(p.ez(imax, kmax)) > std::abs(ref))
        ref = p.ez(imax, kmax);
    if (std::abs(p.ep(imax, kmax)) > std::abs(ref))
        ref = p.ep(imax, kmax);
    const std::complex<double> scale = std::conj(ref) / std::abs(ref) / std::sqrt(peak);
    p.er *= scale;
    p.ep *= scale;
    p.ez *= scale;
}

template <typename Scalar>
ProfileResult profiles_impl(const SimConfig &config, std::span<const double> targets_thz, std::optional<long> window,
                            std::span<const double> q_values)
{
    Simulation<Scalar> sim(config);
    const auto &ops = sim.operators();
    const std::size_t n = targets_thz.size();
    std::vector<Eigen::ArrayXXcd> acc_r(n, Eigen::ArrayXXcd::Zero(ops.nr, ops.nz + 1));
    std::vector<Eigen::ArrayXXcd> acc_p(n, Eigen::ArrayXXcd::Zero(ops.nr + 1, ops.nz + 1));
    std::vector<Eigen::ArrayXXcd> acc_z(n, Eigen::ArrayXXcd::Zero(ops.nr + 1, ops.nz));
    std::vector<double> f(n);
    for (std::size_t j = 0; j < n; ++j)
        f[j] = units::thz_to_engine_frequency(targets_thz[j]);
    const bool demix = n > 1 && q_values.size() == n;
    // Resonance k evolves as exp(-(γ_k + 2πi f_k) t) against the DFT kernel exp(+2πi f_j t).
    std::vector<std::complex<double>> pole(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double gamma = demix ? 0.5 * kTwoPi * f[k] / q_values[k] : 0.0;
        pole[k] = {-gamma, -kTwoPi * f[k]};
    }
    Eigen::MatrixXcd kernel = Eigen::MatrixXcd::Zero(static_cast<Index>(n), static_cast<Index>(n));
    // Real fields also carry the conjugate pole of every resonance.
    constexpr bool real_fields = std::is_same_v<Scalar, double>;
    Eigen::MatrixXcd image = Eigen::MatrixXcd::Zero(static_cast<Index>(n), static_cast<Index>(n));

    ProfileResult result;
    result.series = make_series(sim);
    const long total = sim.total_steps();
    const long accumulate_from = window ? std::max(sim.source_steps(), total - *window) : sim.source_steps();
    // The time step resolves frequencies far above the targets; sampling the
    // DFT at 8 points per period of the highest target is enough, and the
    // demixing kernel is summed over the same samples.
    const double f_max = n > 0 ? *std::max_element(f.begin(), f.end()) : 0.0;
    const long stride = f_max > 0.0 ? std::max(1L, static_cast<long>(1.0 / (8.0 * f_max * sim.dt()))) : 1L;
    const double weight = sim.dt() * static_cast<double>(stride);
    while (sim.step_index() < total) {
        sim.step();
        if (sim.step_index() > sim.source_steps())
            record(sim, result.series);
        if (sim.step_index() > accumulate_from && (sim.step_index() - accumulate_from) % stride == 0) {
            const double t = sim.time();
            for (std::size_t j = 0; j < n; ++j) {
                const std::complex<double> phase = std::polar(weight, kTwoPi * f[j] * t);
                acc_r[j] += sim.fields().er.template cast<std::complex<double>>() * phase;
                acc_p[j] += sim.fields().ep.template cast<std::complex<double>>() * phase;
                acc_z[j] += sim.fields().ez.template cast<std::complex<double>>() * phase;
                if (demix)
                    for (std::size_t k = 0; k < n; ++k) {
                        kernel(static_cast<Index>(j), static_cast<Index>(k)) += phase * std::exp(pole[k] * t);
                        if constexpr (real_fields)
                            image(static_cast<Index>(j), static_cast<Index>(k)) += phase * std::exp(std::conj(pole[k]) * t);
                    }
            }
        }
    }
    if (!sim.all_finite())
        throw NumericalError("simulation diverged");

    if (demix) {
        // For real fields the DFT at -f is the conjugate of the DFT at f, which
        // closes the system [K L; conj(L) conj(K)] [a; conj(a)] = [D; conj(D)].
        const Index ni = static_cast<Index>(n);
        const Index size = real_fields ? 2 * ni : ni;
        Eigen::MatrixXcd system(size, size);
        system.topLeftCorner(ni, ni) = kernel;
        if (real_fields) {
            system.topRightCorner(ni, ni) = image;
            system.bottomLeftCorner(ni, ni) = image.conjugate();
            system.bottomRightCorner(ni, ni) = kernel.conjugate();
        }
        const Eigen::MatrixXcd inverse = Eigen::PartialPivLU<Eigen::MatrixXcd>(system).inverse();
        // Keep the overall scale of each DFT so raw norms stay comparable.
        const auto unmix = [&](std::vector<Eigen::ArrayXXcd> &acc) {
            std::vector<Eigen::ArrayXXcd> out(n, Eigen::ArrayXXcd::Zero(acc[0].rows(), acc[0].cols()));
            for (Index j = 0; j < ni; ++j) {
                for (Index l = 0; l < ni; ++l) {
                    out[j] += acc[l] * inverse(j, l);
                    if (real_fields)
                        out[j] += acc[l].conjugate() * inverse(j, ni + l);
                }
                out[j] *= kernel(j, j);
            }
            acc = std::move(out);
        };
        unmix(acc_r);
        unmix(acc_p);
        unmix(acc_z);
    }

    const IndexMap &map = config.index_map;
    const double window_ps = units::engine_time_to_ps(static_cast<double>(total - accumulate_from) * sim.dt());
    const double resolution_thz = window_ps > 0.0 ? 1.0 / window_ps : 0.0;

    // Resonances seen by the probes, for the contamination check.
    std::vector<double> resonances;
    if (!result.series.empty() && resolution_thz > 0.0) {
        double lo = *std::min_element(targets_thz.begin(), targets_thz.end()) - 4.0 * resolution_thz;
        double hi = *std::max_element(targets_thz.begin(), targets_thz.end()) + 4.0 * resolution_thz;
        try {
            HarminvOptions opts;
            for (const auto &ts : result.series) {
                for (const auto &c : harmonic_inversion(ts, {lo, hi}, opts))
                    if (c.residual < opts.residual_threshold)
                        resonances.push_back(c.frequency_thz);
            }
        } catch (const NumericalError &) {
            // Series too short for harmonic inversion: skip the check.
        }
        std::sort(resonances.begin(), resonances.end());
    }

    for (std::size_t j = 0; j < n; ++j) {
        ModeProfile p;
        p.wavelength_um = units::wavelength_um(targets_thz[j]);
        p.m = config.m;
        p.r_min = map.r_min;
        p.z_min = map.z_min;
        p.dr = map.dr;
        p.dz = map.dz;
        p.er = to_cell_centres_r(acc_r[j]);
        p.ep = to_cell_centres_p(acc_p[j]) * std::complex<double>(0.0, 1.0);
        p.ez = to_cell_centres_z(acc_z[j]);
        // Distinct resonances (closer than the DFT resolution to the target) in the band.
        const auto demixed_other = [&](double nu) {
            if (!demix)
                return false;
            for (std::size_t k = 0; k < n; ++k)
                if (k != j && std::abs(nu - targets_thz[k]) < 0.1 * resolution_thz)
                    return true;
            return false;
        };
        std::vector<double> near;
        for (double nu : resonances)
            if (std::abs(nu - targets_thz[j]) < resolution_thz && !demixed_other(nu) &&
                std::none_of(near.begin(), near.end(), [&](double x) { return std::abs(x - nu) < 1e-3 * resolution_thz + 1e-6; }))
                near.push_back(nu);
        if (near.size() > 1) {
            std::ostringstream os;
            os << near.size() << " resonances within the DFT bandwidth (" << resolution_thz << " THz) of "
               << targets_thz[j] << " THz; profile may be contaminated";
            p.warnings.push_back(os.str());
        }
        p.raw_norm = std::sqrt(p.intensity().sum());
        normalise(p);
        result.profiles.push_back(std::move(p));
    }
    return result;
}

} // namespace

std::vector<TimeSeries> run_ringdown(const SimConfig &config)
{
    return is_real_run(config) ? ringdown_impl<double>(config) : ringdown_impl<std::complex<double>>(config);
}

ProfileResult accumulate_profiles(const SimConfig &config, std::span<const double> targets_thz,
                                  std::optional<long> window_steps, std::span<const double> q_values)
{
    for (double nu : targets_thz)
        if (!(nu > 0.0))
            throw ValidationError("target", "target frequency must be positive");
    if (!q_values.empty() && q_values.size() != targets_thz.size())
        throw ValidationError("q_values", "one quality factor per target is required");
    for (double q : q_values)
        if (!(q > 0.0))
            throw ValidationError("q_values", "quality factors must be positive");
    return is_real_run(config) ? profiles_impl<double>(config, targets_thz, window_steps, q_values)
                               : profiles_impl<std::complex<double>>(config, targets_thz, window_steps, q_values);
}

ModeProfile accumulate_profile(const SimConfig &config, double target_thz, std::optional<long> window_steps)
{
    auto result = accumulate_profiles(config, std::span<const double>(&target_thz, 1), window_steps);
    return std::move(result.profiles.front());
}

} // namespace wgmcav
