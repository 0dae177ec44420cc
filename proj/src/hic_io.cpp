#include "hicentro/hic_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hicentro/error.hpp"
#include "hicentro/simulator.hpp"

namespace hicentro {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string block_file_name(std::size_t i, std::size_t j) {
  return "block_" + std::to_string(i) + "_" + std::to_string(j) + ".tsv";
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace

void write_tsv(const fs::path& path, const Eigen::Ref<const Block>& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  for (Eigen::Index x = 0; x < m.rows(); ++x) {
    for (Eigen::Index y = 0; y < m.cols(); ++y) {
      if (y) out << '\t';
      out << format_double(m(x, y));
    }
    out << '\n';
  }
}

Block read_tsv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t end = line.find('\t', start);
      if (end == std::string::npos) end = line.size();
      double v{};
      const char* first = line.data() + start;
      const char* last = line.data() + end;
      auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc{} || res.ptr != last) {
        throw LoadError(path.string() + ": non-numeric cell at row " + std::to_string(line_no) + ", column " +
                        std::to_string(row.size() + 1));
      }
      row.push_back(v);
      start = end + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw LoadError(path.string() + ": ragged row " + std::to_string(line_no));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw LoadError(path.string() + ": empty matrix file");
  Block m(rows.size(), rows.front().size());
  for (std::size_t x = 0; x < rows.size(); ++x)
    for (std::size_t y = 0; y < rows[x].size(); ++y) m(x, y) = rows[x][y];
  return m;
}

void save_map(const ContactMap& map, const fs::path& dir, const MapMetadata& meta) {
  fs::create_directories(dir);
  const GenomeSpec& g = map.genome();
  nlohmann::json j;
  j["genome"] = g.to_json();
  j["genome_hash"] = g.hash();
  j["resolution_bp"] = g.resolution();
  j["normalized"] = meta.normalized;
  if (meta.theta_ref) j["theta_ref"] = *meta.theta_ref;
  if (meta.seed) j["seed"] = *meta.seed;
  j["blocks"] = nlohmann::json::array();
  for (auto [i, jj] : g.pairs()) {
    const Block& b = map.block(i, jj);
    write_tsv(dir / block_file_name(i, jj), b);
    j["blocks"].push_back({{"i", i}, {"j", jj}, {"rows", b.rows()}, {"cols", b.cols()}, {"file", block_file_name(i, jj)}});
  }
  std::ofstream out(dir / "map.json", std::ios::binary);
  out << j.dump(2) << '\n';
}

MapMetadata load_map_metadata(const fs::path& dir) {
  const auto j = read_json(dir / "map.json");
  MapMetadata meta;
  try {
    meta.genome_hash = j.at("genome_hash").get<std::uint64_t>();
    meta.resolution = j.at("resolution_bp").get<bp_t>();
    meta.normalized = j.value("normalized", false);
    if (j.contains("theta_ref")) meta.theta_ref = j["theta_ref"].get<CentromereVector>();
    if (j.contains("seed")) meta.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError((dir / "map.json").string() + ": " + e.what());
  }
  return meta;
}

ContactMap load_map(const fs::path& dir, const GenomeSpec& genome) {
  const MapMetadata meta = load_map_metadata(dir);
  if (meta.resolution != genome.resolution()) throw LoadError("load_map: resolution does not match genome spec");
  if (meta.genome_hash != genome.hash()) throw LoadError("load_map: genome hash does not match genome spec");
  ContactMap map(genome);
  for (auto [i, j] : genome.pairs()) {
    const std::string where = "block (" + std::to_string(i) + "," + std::to_string(j) + ")";
    const fs::path file = dir / block_file_name(i, j);
    Block b;
    try {
      b = read_tsv(file);
    } catch (const LoadError& e) {
      throw LoadError(where + ": " + e.what());
    }
    if (static_cast<std::size_t>(b.rows()) != genome.bins(i) || static_cast<std::size_t>(b.cols()) != genome.bins(j)) {
      std::ostringstream msg;
      msg << where << ": shape " << b.rows() << "x" << b.cols() << " but genome expects " << genome.bins(i) << "x"
          << genome.bins(j);
      throw LoadError(msg.str());
    }
    for (Eigen::Index x = 0; x < b.rows(); ++x) {
      for (Eigen::Index y = 0; y < b.cols(); ++y) {
        if (!(b(x, y) >= 0.0) || !std::isfinite(b(x, y))) {
          throw LoadError(where + ": invalid count at cell (" + std::to_string(x) + "," + std::to_string(y) + ")");
        }
      }
    }
    map.block(i, j) = std::move(b);
  }
  return map;
}

IceResult ice_normalize(const Eigen::MatrixXd& m, const IceOptions& options) {
  if (m.rows() != m.cols()) throw DomainError("ice_normalize: matrix is not square");
  if (((m - m.transpose()).array().abs() > 1e-9).any()) throw DomainError("ice_normalize: matrix is not symmetric");
  if ((m.array() < 0.0).any()) throw DomainError("ice_normalize: negative entries");

  const Eigen::Index n = m.rows();
  IceResult res;
  res.matrix = m;
  res.bias = Eigen::VectorXd::Ones(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (m.row(k).sum() == 0.0) res.zero_rows.push_back(static_cast<std::size_t>(k));
  }

  auto max_deviation = [&](const Eigen::VectorXd& sums) {
    double dev = 0.0;
    for (Eigen::Index k = 0; k < n; ++k)
      if (sums[k] > 0.0) dev = std::max(dev, std::abs(sums[k] - 1.0));
    return dev;
  };

  for (res.iterations = 0; res.iterations < options.max_iters; ++res.iterations) {
    const Eigen::VectorXd sums = res.matrix.rowwise().sum();
    if (max_deviation(sums) <= options.tol) {
      res.converged = true;
      break;
    }
    // Symmetric update: divide row k and column k by sqrt(sum_k).
    Eigen::VectorXd scale(n);
    for (Eigen::Index k = 0; k < n; ++k) scale[k] = sums[k] > 0.0 ? 1.0 / std::sqrt(sums[k]) : 1.0;
    res.matrix = scale.asDiagonal() * res.matrix * scale.asDiagonal();
    res.matrix = 0.5 * (res.matrix + res.matrix.transpose()).eval();
    res.bias = res.bias.cwiseProduct(scale);
  }
  if (!res.converged) res.converged = max_deviation(res.matrix.rowwise().sum()) <= options.tol;
  return res;
}

ContactMap ice_normalize(const ContactMap& map, const IceOptions& options) {
  const IceResult res = ice_normalize(map.assemble(), options);
  return ContactMap::from_assembled(map.genome(), res.matrix);
}

ReferenceMode parse_reference_mode(const std::string& s) {
  if (s == "raw") return ReferenceMode::raw;
  if (s == "normalized") return ReferenceMode::normalized;
  throw ConfigError("unknown reference mode '" + s + "' (expected raw|normalized)");
}

Reference make_reference(const GenomeSpec& spec, const CentromereVector& theta_ref, std::uint64_t seed,
                         ReferenceMode mode) {
  Rng rng(seed);
  Reference ref{simulate_map(spec, theta_ref, rng), {}};
  if (mode == ReferenceMode::normalized) ref.map = ice_normalize(ref.map);
  ref.meta.genome_hash = spec.hash();
  ref.meta.resolution = spec.resolution();
  ref.meta.theta_ref = theta_ref;
  ref.meta.seed = seed;
  ref.meta.normalized = mode == ReferenceMode::normalized;
  return ref;
}

}  // namespace hicentro
