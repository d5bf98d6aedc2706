#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "wtransport/density.hpp"
#include "wtransport/errors.hpp"
#include "wtransport/flow.hpp"
#include "wtransport/functionals.hpp"
#include "wtransport/noise.hpp"
#include "wtransport/stoch_flow.hpp"
#include "wtransport/tangent.hpp"
#include "wtransport/transport_det.hpp"
#include "wtransport/transport_stoch.hpp"

namespace py = pybind11;
using namespace wtransport;

PYBIND11_MODULE(_wtransport, m) {
    m.doc() = "Flows of circle diffeomorphisms, tangent projections, parallel "
              "translation (deterministic and stochastic), energy functionals "
              "and their intrinsic Ito calculus.";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DiffeomorphismError>(m, "DiffeomorphismError", PyExc_ArithmeticError);
    py::register_exception<DensityError>(m, "DensityError", PyExc_ArithmeticError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.attr("TWO_PI") = kTwoPi;

    // ---- grid ------------------------------------------------------------
    py::class_<GridField>(m, "GridField", "Real samples on the uniform circle grid")
        .def(py::init([](std::vector<double> v) {
                 const int n = static_cast<int>(v.size());
                 return GridField(n, std::move(v));
             }),
             py::arg("values"))
        .def_readonly("n", &GridField::n)
        .def_readonly("values", &GridField::values)
        .def("__len__", [](const GridField& f) { return f.values.size(); })
        .def("__getitem__", [](const GridField& f, int j) { return f.values.at(j); });
    py::implicitly_convertible<py::list, GridField>();

    m.def("grid_nodes", &grid_nodes, py::arg("n"), "Nodes 2*pi*j/n, j = 0..n-1");
    m.def("integrate", &integrate, py::arg("field"), "Trapezoid = spectral mean times 2*pi");

    py::class_<Density>(m, "Density", "Strictly positive grid density of unit mass")
        .def_property_readonly("n", &Density::n)
        .def_property_readonly("values", [](const Density& d) { return d.rho.values; })
        .def("__len__", [](const Density& d) { return d.rho.values.size(); });
    m.def(
        "make_density", [](const GridField& f) { return make_density(f); }, py::arg("field"),
        "Normalize a positive field to unit mass (floors at 1e-12)");

    // ---- tangent space ----------------------------------------------------
    m.def("project", &project, py::arg("rho"), py::arg("v"),
          "Tangent projection at rho: removes the hat-density component, "
          "output has zero Lebesgue mean");
    m.def("witten_laplacian", &witten_laplacian, py::arg("rho"), py::arg("g"),
          "g -> -div(rho * dx(g)) / rho on the grid");
    m.def("div_mu", &div_mu, py::arg("rho"), py::arg("v"), "v -> dx(rho v) / rho");

    // ---- deterministic flow ------------------------------------------------
    py::class_<VelocityPotential>(m, "VelocityPotential",
                                  "psi(t, x) = w(t) * sum_k (a_k cos kx + b_k sin kx); the "
                                  "velocity is dx(psi)")
        .def(py::init([](const std::vector<std::tuple<int, double, double>>& modes,
                         std::function<double(double)> weight) {
                 std::vector<FourierMode> ms;
                 for (const auto& [k, a, b] : modes) ms.push_back({k, a, b});
                 if (weight) return VelocityPotential(std::move(ms), std::move(weight));
                 return VelocityPotential(std::move(ms));
             }),
             py::arg("modes"), py::arg("time_weight") = nullptr,
             "modes: list of (k, cos_coef, sin_coef)");

    py::class_<FlowState>(m, "FlowState", "Lifted diffeomorphism X and Jacobian J at time t")
        .def_static("identity", &FlowState::identity, py::arg("n"))
        .def_readonly("t", &FlowState::t)
        .def_property_readonly("lift", [](const FlowState& s) { return s.X.lift; })
        .def_property_readonly("jacobian", [](const FlowState& s) { return s.J.values; });

    m.def(
        "advance_flow",
        [](FlowState& s, const VelocityPotential& V, double t_target, double dt) {
            advance_to(s, V, t_target, dt);
        },
        py::arg("state"), py::arg("potential"), py::arg("t_target"), py::arg("dt"),
        "RK4 steps of the joint (X, J) system up to t_target (in place)");
    m.def(
        "push_density",
        [](const Density& rho0, const FlowState& s) { return push_density(rho0, s); },
        py::arg("rho0"), py::arg("flow"), "Pushforward (rho0 / J) o X^{-1}, spectral inverse");
    m.def("jacobian_consistency_gap", &jacobian_consistency_gap, py::arg("state"),
          "sup |J - dx(X)| over the grid");

    // ---- deterministic transport -------------------------------------------
    py::class_<DetTransportRecord>(m, "DetTransportRecord")
        .def_readonly("t", &DetTransportRecord::t)
        .def_readonly("norm2", &DetTransportRecord::norm2)
        .def_readonly("mean_g", &DetTransportRecord::mean_g);
    py::class_<DetTransportResult>(m, "DetTransportResult")
        .def_readonly("records", &DetTransportResult::records)
        .def_readonly("norm_drift_rel", &DetTransportResult::norm_drift_rel)
        .def_readonly("max_abs_mean_g", &DetTransportResult::max_abs_mean_g)
        .def_property_readonly("f", [](const DetTransportResult& r) { return r.f.values; })
        .def_property_readonly("final_lift",
                               [](const DetTransportResult& r) { return r.flow.X.lift; });
    m.def(
        "integrate_parallel_det",
        [](const VelocityPotential& V, const Density& rho0, const GridField& g0, double T,
           double dt) { return integrate_parallel_det(V, rho0, g0, T, dt); },
        py::arg("potential"), py::arg("rho0"), py::arg("g0"), py::arg("T"), py::arg("dt"),
        "Parallel translation of g0 along the potential flow (RK4, Lagrangian form)");
    m.def(
        "eulerian_field",
        [](const GridField& f, const FlowState& s) { return eulerian_field(f, s); },
        py::arg("f"), py::arg("flow"), "g = f o X^{-1} on the grid");

    // ---- noise ---------------------------------------------------------------
    m.def("path_seed", &path_seed, py::arg("base"), py::arg("path"));
    m.def("zeta_sum", &zeta_sum, py::arg("s"), "sum_{k >= 1} k^{-s}");

    py::class_<BrownianDriver>(m, "BrownianDriver",
                               "Counter-RNG Brownian increments; same seed => same path "
                               "across channel counts and coarsenings")
        .def_readonly("seed", &BrownianDriver::seed)
        .def_readonly("dt", &BrownianDriver::dt)
        .def_readonly("steps", &BrownianDriver::steps)
        .def_readonly("channels", &BrownianDriver::channels)
        .def("increment", &BrownianDriver::increment, py::arg("step"), py::arg("channel"))
        .def("coarsened", &BrownianDriver::coarsened, py::arg("factor"));
    m.def("sample_driver", &sample_driver, py::arg("seed"), py::arg("dt"), py::arg("steps"),
          py::arg("channels"));

    py::class_<NoiseBasis>(m, "NoiseBasis",
                           "Velocity channels cos(kx)/k^q, sin(kx)/k^q, k = 1..N")
        .def(py::init<int, double>(), py::arg("N"), py::arg("q"))
        .def_readonly("N", &NoiseBasis::N)
        .def_readonly("q", &NoiseBasis::q)
        .def("channels", &NoiseBasis::channels);

    py::enum_<Scheme>(m, "Scheme")
        .value("STRAT_HEUN", Scheme::StratHeun)
        .value("ITO_EULER", Scheme::ItoEuler)
        .value("STRAT_MIDPOINT", Scheme::StratMidpoint);

    py::class_<ChannelAdapter>(m, "ChannelAdapter")
        .def("channels", &ChannelAdapter::channels);
    py::class_<FourierChannels, ChannelAdapter>(m, "FourierChannels")
        .def(py::init<const NoiseBasis&>(), py::arg("basis"));
    py::class_<PotentialChannels, ChannelAdapter>(m, "PotentialChannels")
        .def(py::init<std::vector<VelocityPotential>, std::vector<double>>(),
             py::arg("potentials"), py::arg("weights"));

    // ---- stochastic transport --------------------------------------------------
    py::class_<StochTransportRecord>(m, "StochTransportRecord")
        .def_readonly("t", &StochTransportRecord::t)
        .def_readonly("norm2", &StochTransportRecord::norm2)
        .def_readonly("mean_g", &StochTransportRecord::mean_g);
    py::class_<StochTransportResult>(m, "StochTransportResult")
        .def_readonly("records", &StochTransportResult::records)
        .def_readonly("norm_drift_rel", &StochTransportResult::norm_drift_rel)
        .def_readonly("max_abs_mean_g", &StochTransportResult::max_abs_mean_g)
        .def_readonly("kunita_gap_final", &StochTransportResult::kunita_gap_final)
        .def_property_readonly("f", [](const StochTransportResult& r) { return r.f.values; });
    m.def(
        "integrate_stoch_parallel",
        [](const GridField& g0, ChannelAdapter& chans, const BrownianDriver& driver,
           const Density& rho0, Scheme scheme) {
            return integrate_stoch_parallel(g0, chans, driver, rho0, scheme);
        },
        py::arg("g0"), py::arg("channels"), py::arg("driver"), py::arg("rho0"),
        py::arg("scheme") = Scheme::StratHeun);

    py::class_<TransportBatchReport>(m, "TransportBatchReport")
        .def_readonly("paths", &TransportBatchReport::paths)
        .def_readonly("dt", &TransportBatchReport::dt)
        .def_readonly("T", &TransportBatchReport::T)
        .def_readonly("seed", &TransportBatchReport::seed)
        .def_readonly("worst_norm_drift", &TransportBatchReport::worst_norm_drift)
        .def_readonly("worst_mean_g", &TransportBatchReport::worst_mean_g)
        .def_readonly("worst_kunita_gap", &TransportBatchReport::worst_kunita_gap)
        .def_readonly("norm_drifts", &TransportBatchReport::norm_drifts);
    m.def("stoch_transport_batch", &stoch_transport_batch, py::arg("seed"), py::arg("g0"),
          py::arg("rho0"), py::arg("channels"), py::arg("paths"), py::arg("dt_fine"),
          py::arg("T"), py::arg("scheme") = Scheme::StratHeun, py::arg("coarsen_block") = 1,
          "Monte Carlo batch of stochastic parallel translations; dt_fine keys the "
          "Brownian lattice so coarsen_block couples refinements pathwise");

    py::class_<SchemeGapReport>(m, "SchemeGapReport")
        .def_readonly("dts", &SchemeGapReport::dts)
        .def_readonly("gaps", &SchemeGapReport::gaps)
        .def_readonly("std_errors", &SchemeGapReport::std_errors)
        .def_readonly("order", &SchemeGapReport::order)
        .def_readonly("threshold", &SchemeGapReport::threshold)
        .def_readonly("passed", &SchemeGapReport::pass);
    m.def("scheme_agreement_experiment", &scheme_agreement_experiment, py::arg("seed"),
          py::arg("g0"), py::arg("rho0"), py::arg("N"), py::arg("q"), py::arg("dts"),
          py::arg("T"), py::arg("paths"), py::arg("order_threshold"),
          "Strong Ito-Euler vs Stratonovich-Heun gap across dt; slope certifies the "
          "correction drift");

    py::class_<GalerkinReport>(m, "GalerkinReport")
        .def_readonly("levels", &GalerkinReport::levels)
        .def_readonly("ref_level", &GalerkinReport::ref_level)
        .def_readonly("sup_errors", &GalerkinReport::sup_errors)
        .def_readonly("std_errors", &GalerkinReport::std_errors)
        .def_readonly("exceedance", &GalerkinReport::exceedance)
        .def_readonly("slope", &GalerkinReport::slope)
        .def_readonly("slope_se", &GalerkinReport::slope_se)
        .def_readonly("slope_bound", &GalerkinReport::slope_bound)
        .def_readonly("decreasing", &GalerkinReport::decreasing)
        .def_readonly("passed", &GalerkinReport::pass);
    m.def("galerkin_convergence", &galerkin_convergence, py::arg("seed"), py::arg("g0"),
          py::arg("rho0"), py::arg("q"), py::arg("levels"), py::arg("ref_level"),
          py::arg("paths"), py::arg("dt"), py::arg("T"), py::arg("beta"),
          py::arg("slope_threshold"));

    m.def("rs_identity_check", &rs_identity_check, py::arg("rho"), py::arg("phi"),
          py::arg("psi"), "Grid gap in the drift consolidation identity; pure algebra");

    // ---- stochastic flow experiments ---------------------------------------
    py::class_<CouplingReport>(m, "CouplingReport")
        .def_readonly("levels", &CouplingReport::levels)
        .def_readonly("ref_level", &CouplingReport::ref_level)
        .def_readonly("estimates", &CouplingReport::estimates)
        .def_readonly("std_errors", &CouplingReport::std_errors)
        .def_readonly("slope", &CouplingReport::slope)
        .def_readonly("slope_se", &CouplingReport::slope_se)
        .def_readonly("slope_bound", &CouplingReport::slope_bound)
        .def_readonly("decreasing", &CouplingReport::decreasing)
        .def_readonly("passed", &CouplingReport::pass);
    m.def("coupling_error_experiment", &coupling_error_experiment, py::arg("seed"),
          py::arg("levels"), py::arg("ref_level"), py::arg("q"), py::arg("n"), py::arg("dt"),
          py::arg("T"), py::arg("p"), py::arg("paths"), py::arg("slope_threshold"),
          "E sup_t |X^N - X^ref|^{2p} across truncation levels, coupled noise");

    py::class_<MomentReport>(m, "MomentReport")
        .def_readonly("estimate", &MomentReport::estimate)
        .def_readonly("std_error", &MomentReport::std_error)
        .def_readonly("ci_lo", &MomentReport::ci_lo)
        .def_readonly("ci_hi", &MomentReport::ci_hi)
        .def_readonly("bound", &MomentReport::bound)
        .def_readonly("exact", &MomentReport::exact)
        .def_readonly("passed", &MomentReport::pass);
    m.def("moment_bound_check", &moment_bound_check, py::arg("seed"), py::arg("N"), py::arg("q"),
          py::arg("n"), py::arg("dt"), py::arg("t"), py::arg("p"), py::arg("paths"),
          "E[K_t(x)^p] against the lognormal envelope exp(p^2 zeta(2q-2) t / 2)");

    // ---- energy functionals ----------------------------------------------------
    py::class_<PotentialEnergy>(m, "PotentialEnergy", "F(mu) = int varphi dmu")
        .def(py::init<GridField>(), py::arg("varphi"));
    py::class_<InternalEnergy>(m, "InternalEnergy", "F(mu) = int chi(rho) dx")
        .def_static("entropy", &InternalEnergy::entropy)
        .def_static("power", &InternalEnergy::power, py::arg("m"))
        .def_readonly("name", &InternalEnergy::name);
    py::class_<InteractionEnergy>(m, "InteractionEnergy", "F(mu) = iint W(x, y) dmu dmu")
        .def_static("difference_kernel", &InteractionEnergy::difference_kernel,
                    py::arg("profile"));

    m.def("functional_name", &functional_name, py::arg("functional"));
    m.def("evaluate", &evaluate, py::arg("functional"), py::arg("rho"));
    m.def("first_derivative", &first_derivative, py::arg("functional"), py::arg("rho"),
          py::arg("psi"), "Derivative along the projected constant field of psi");
    m.def("second_derivative", &second_derivative, py::arg("functional"), py::arg("rho"),
          py::arg("psi"));

    py::class_<MartingaleBlock>(m, "MartingaleBlock")
        .def_readonly("t0", &MartingaleBlock::t0)
        .def_readonly("t1", &MartingaleBlock::t1)
        .def_readonly("mean", &MartingaleBlock::mean)
        .def_readonly("std_error", &MartingaleBlock::std_error)
        .def_readonly("z", &MartingaleBlock::z);
    py::class_<ItoReport>(m, "ItoReport")
        .def_readonly("functional", &ItoReport::functional)
        .def_readonly("paths", &ItoReport::paths)
        .def_readonly("dt", &ItoReport::dt)
        .def_readonly("T", &ItoReport::T)
        .def_readonly("estimate", &ItoReport::estimate)
        .def_readonly("std_error", &ItoReport::std_error)
        .def_readonly("scale", &ItoReport::scale)
        .def_readonly("z_score", &ItoReport::z_score)
        .def_readonly("passed", &ItoReport::pass)
        .def_readonly("martingale_pass", &ItoReport::martingale_pass)
        .def_readonly("blocks", &ItoReport::blocks);
    m.def("ito_verify", &ito_verify, py::arg("functional"), py::arg("rho0"), py::arg("channels"),
          py::arg("seed"), py::arg("paths"), py::arg("dt"), py::arg("T"), py::arg("blocks"),
          "Antithetic Monte Carlo of F(mu_T) - F(mu_0) - int (drift) dt; zero-mean "
          "z-test plus per-block martingale increments");
}
