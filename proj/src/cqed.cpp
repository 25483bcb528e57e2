#include "wgmcav/cqed.hpp"

#include <cmath>

#include "wgmcav/errors.hpp"
#include "wgmcav/units.hpp"

namespace wgmcav
{
EmitterModel nv_center()
{
    return EmitterModel{};
}

void validate(const EmitterModel &emitter)
{
    if (!(emitter.gamma_zpl_ghz > 0.0))
        throw ValidationError("gamma_zpl", "ZPL rate must be positive");
    if (!(emitter.gamma_ghz > emitter.gamma_zpl_ghz))
        throw ValidationError("gamma", "total rate must exceed the ZPL rate");
    if (!(emitter.lambda_zpl_um > 0.0))
        throw ValidationError("lambda_zpl", "ZPL wavelength must be positive");
}

double kappa(double lambda_um, double q)
{
    if (!(lambda_um > 0.0))
        throw ValidationError("wavelength", "wavelength must be positive");
    if (!(q > 0.0))
        throw ValidationError("q", "Q must be positive");
    return units::frequency_thz(lambda_um) / (2.0 * q) * 1e3;
}

double purcell_zpl(double q, double mode_volume, double eta, double n_emit, double n_max_loc)
{
    if (!(q > 0.0))
        throw ValidationError("q", "Q must be positive");
    if (!(mode_volume > 0.0))
        throw ValidationError("mode_volume", "mode volume is missing or non-positive");
    if (!(eta >= 0.0))
        throw ValidationError("eta", "eta is missing or negative");
    if (!(n_emit > 0.0) || !(n_max_loc > 0.0))
        throw ValidationError("index", "indices must be positive");
    const double pi2 = units::kPi * units::kPi;
    return 3.0 / (4.0 * pi2) * (n_max_loc / n_emit) * q * eta * eta / mode_volume;
}

double purcell_zpl(const ResonantMode &mode, double n_emit, double n_max_loc)
{
    return purcell_zpl(mode.q_total(), mode.reported_mode_volume(), mode.eta, n_emit, n_max_loc);
}

double coupling_g(double purcell, double kappa_ghz, double gamma_zpl_ghz)
{
    if (purcell < 0.0 || kappa_ghz < 0.0 || gamma_zpl_ghz < 0.0)
        throw ValidationError("coupling", "F, kappa and gamma_zpl must be non-negative");
    return std::sqrt(0.5 * purcell * kappa_ghz * gamma_zpl_ghz);
}

double beta(double purcell, const EmitterModel &emitter)
{
    validate(emitter);
    if (purcell < 0.0)
        throw ValidationError("purcell", "Purcell factor must be non-negative");
    const double cavity = purcell * emitter.gamma_zpl_ghz;
    return cavity / (emitter.gamma_ghz - emitter.gamma_zpl_ghz + cavity);
}

CqedParams cqed_parameters(const ResonantMode &mode, const EmitterModel &emitter, double n_emit, double n_max_loc)
{
    validate(emitter);
    CqedParams p;
    p.kappa_ghz = kappa(mode.wavelength_um, mode.q_total());
    p.purcell = purcell_zpl(mode, n_emit, n_max_loc);
    p.g_ghz = coupling_g(p.purcell, p.kappa_ghz, emitter.gamma_zpl_ghz);
    p.beta = beta(p.purcell, emitter);
    return p;
}

} // namespace wgmcav
