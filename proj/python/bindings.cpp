// Python bindings: genome geometry, simulation, ICE, metrics and experiments.
// JSON-shaped values cross the boundary as strings and are decoded in
// hicentro/__init__.py.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hicentro/density.hpp"
#include "hicentro/error.hpp"
#include "hicentro/hic_io.hpp"
#include "hicentro/metrics.hpp"
#include "hicentro/pipeline.hpp"
#include "hicentro/simulator.hpp"

namespace py = pybind11;
using namespace hicentro;

namespace {

std::vector<Chromosome> chromosomes_of(const std::vector<std::pair<std::string, bp_t>>& spec) {
  std::vector<Chromosome> out;
  for (const auto& [name, length] : spec) out.push_back({name, length});
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Centromere inference from Hi-C contact maps";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<LoadError>(m, "LoadError", PyExc_OSError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);

  py::class_<GenomeSpec>(m, "GenomeSpec")
      .def(py::init([](const std::vector<std::pair<std::string, bp_t>>& chroms, bp_t resolution) {
             return GenomeSpec(chromosomes_of(chroms), resolution);
           }),
           py::arg("chromosomes"), py::arg("resolution"))
      .def_static("load", &GenomeSpec::load, py::arg("path"))
      .def_static("from_json", [](const std::string& s) { return GenomeSpec::from_json(nlohmann::json::parse(s)); })
      .def("to_json", [](const GenomeSpec& g) { return g.to_json().dump(); })
      .def("__len__", &GenomeSpec::size)
      .def_property_readonly("resolution", &GenomeSpec::resolution)
      .def_property_readonly("names", [](const GenomeSpec& g) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < g.size(); ++i) out.push_back(g.name(i));
        return out;
      })
      .def_property_readonly("lengths", [](const GenomeSpec& g) {
        std::vector<bp_t> out;
        for (std::size_t i = 0; i < g.size(); ++i) out.push_back(g.length(i));
        return out;
      })
      .def("bins", &GenomeSpec::bins, py::arg("chrom"))
      .def_property_readonly("total_bins", &GenomeSpec::total_bins)
      .def("offset", &GenomeSpec::offset, py::arg("chrom"))
      .def("prior_lower", &GenomeSpec::prior_lower)
      .def("prior_upper", &GenomeSpec::prior_upper)
      .def("hash", &GenomeSpec::hash)
      .def("__eq__", [](const GenomeSpec& a, const GenomeSpec& b) { return a == b; });

  m.def("yeast_genome", &yeast_genome);
  m.def("yeast_small_genome", &yeast_small_genome);
  m.def("bp_to_bin", &bp_to_bin, py::arg("pos"), py::arg("genome"), py::arg("chrom"));
  m.def("bin_to_bp", &bin_to_bp, py::arg("bin"), py::arg("genome"));
  m.def("sample_prior", [](const GenomeSpec& g, std::uint64_t seed) {
    Rng rng(seed);
    return sample_prior(g, rng);
  }, py::arg("genome"), py::arg("seed"));

  py::class_<ContactMap>(m, "ContactMap")
      .def_property_readonly("genome", &ContactMap::genome)
      .def_property_readonly("block_count", &ContactMap::block_count)
      .def("block", [](const ContactMap& c, std::size_t i, std::size_t j) { return c.oriented_block(i, j); },
           py::arg("i"), py::arg("j"))
      .def("assemble", &ContactMap::assemble)
      .def_static("from_assembled", &ContactMap::from_assembled, py::arg("genome"), py::arg("matrix"))
      .def("save", [](const ContactMap& c, const std::filesystem::path& dir) {
        MapMetadata meta;
        meta.genome_hash = c.genome().hash();
        meta.resolution = c.genome().resolution();
        save_map(c, dir, meta);
      }, py::arg("dir"))
      .def_static("load", &load_map, py::arg("dir"), py::arg("genome"));

  m.def("simulate_map", [](const GenomeSpec& g, const CentromereVector& theta, std::uint64_t seed,
                           std::optional<double> noise_frac) {
    Rng rng(seed);
    return simulate_map(g, theta, rng, SimOptions{noise_frac});
  }, py::arg("genome"), py::arg("theta"), py::arg("seed"), py::arg("noise_frac") = py::none());

  m.def("make_reference", [](const GenomeSpec& g, const CentromereVector& theta, std::uint64_t seed,
                             const std::string& mode) {
    return make_reference(g, theta, seed, parse_reference_mode(mode)).map;
  }, py::arg("genome"), py::arg("theta"), py::arg("seed"), py::arg("mode") = "raw");

  m.def("ice_normalize", [](const Eigen::MatrixXd& mat, std::size_t max_iters, double tol) {
    const IceResult r = ice_normalize(mat, IceOptions{max_iters, tol});
    return py::make_tuple(r.matrix, r.bias, r.iterations, r.converged);
  }, py::arg("matrix"), py::arg("max_iters") = 200, py::arg("tol") = 1e-6);

  m.def("block_pearson", py::overload_cast<const ContactMap&, const ContactMap&>(&block_pearson));
  m.def("row_pearson", &row_pearson);
  m.def("euclidean_mean", [](const Samples& s, const std::vector<double>& t) { return euclidean_mean(s, t); },
        py::arg("samples"), py::arg("theta_ref"));
  m.def("wasserstein2_to_dirac",
        [](const Samples& s, const std::vector<double>& t) { return wasserstein2_to_dirac(s, t); },
        py::arg("samples"), py::arg("theta_ref"));
  m.def("mmd_to_dirac", [](const Samples& s, const std::vector<double>& t, std::optional<double> bw) {
    return bw ? mmd_to_dirac(s, t, Bandwidth{*bw}) : mmd_to_dirac(s, t);
  }, py::arg("samples"), py::arg("theta_ref"), py::arg("bandwidth") = py::none());
  m.def("evaluate_samples", [](const Samples& s, const std::vector<double>& w, const std::vector<double>& t) {
    return evaluate_samples(s, w, t).to_json().dump();
  }, py::arg("samples"), py::arg("weights"), py::arg("theta_ref"));

  m.def("export_density", [](const Samples& s, const std::vector<double>& w, const std::vector<double>& lower,
                             const std::vector<double>& upper, std::size_t points) {
    py::list out;
    for (const auto& g : export_density(s, w, BoxPrior{lower, upper}, points))
      out.append(py::make_tuple(g.x, g.density, g.bandwidth));
    return out;
  }, py::arg("samples"), py::arg("weights"), py::arg("lower"), py::arg("upper"), py::arg("points") = 512);

  m.def("run_experiment", [](const std::string& config, const std::filesystem::path& base_dir,
                             const std::filesystem::path& out_dir) {
    const ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::parse(config), base_dir);
    py::gil_scoped_release release;
    return run_experiment(cfg, out_dir).metrics_json().dump();
  }, py::arg("config"), py::arg("base_dir") = std::filesystem::path{}, py::arg("out_dir") = std::filesystem::path{});
}
