#include "hicentro/genome.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "hicentro/error.hpp"

namespace hicentro {

GenomeSpec::GenomeSpec(std::vector<Chromosome> chromosomes, bp_t resolution_bp)
    : chromosomes_(std::move(chromosomes)), resolution_(resolution_bp) {
  if (resolution_ <= 0) throw DomainError("genome: resolution must be positive");
  if (chromosomes_.size() < 2) throw DomainError("genome: at least two chromosomes are required");
  std::size_t offset = 0;
  for (const auto& c : chromosomes_) {
    if (c.length_bp <= resolution_) {
      throw DomainError("genome: chromosome '" + c.name + "' is not longer than the resolution");
    }
    const auto n = static_cast<std::size_t>((c.length_bp + resolution_ - 1) / resolution_);
    bins_.push_back(n);
    offsets_.push_back(offset);
    offset += n;
    max_bins_ = std::max(max_bins_, n);
  }
  total_bins_ = offset;
}

const Chromosome& GenomeSpec::chromosome(std::size_t i) const {
  if (i >= chromosomes_.size()) throw DomainError("genome: chromosome index out of range");
  return chromosomes_[i];
}

std::size_t GenomeSpec::bins(std::size_t i) const {
  if (i >= bins_.size()) throw DomainError("genome: chromosome index out of range");
  return bins_[i];
}

std::size_t GenomeSpec::offset(std::size_t i) const {
  if (i >= offsets_.size()) throw DomainError("genome: chromosome index out of range");
  return offsets_[i];
}

std::size_t GenomeSpec::pair_index(std::size_t i, std::size_t j) const {
  const std::size_t n = size();
  if (i >= j || j >= n) throw DomainError("genome: pair index requires i < j < L");
  // Pairs (0,1), (0,2), ..., (0,n-1), (1,2), ...
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

std::vector<std::pair<std::size_t, std::size_t>> GenomeSpec::pairs() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(pair_count());
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = i + 1; j < size(); ++j) out.emplace_back(i, j);
  return out;
}

GenomeSpec GenomeSpec::subset(std::span<const std::size_t> indices) const {
  std::vector<Chromosome> picked;
  for (auto i : indices) picked.push_back(chromosome(i));
  return GenomeSpec(std::move(picked), resolution_);
}

std::vector<double> GenomeSpec::prior_lower() const { return std::vector<double>(size(), 1.0); }

std::vector<double> GenomeSpec::prior_upper() const {
  std::vector<double> up;
  for (const auto& c : chromosomes_) up.push_back(static_cast<double>(c.length_bp - 1));
  return up;
}

std::uint64_t GenomeSpec::hash() const {
  const std::string text = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json GenomeSpec::to_json() const {
  nlohmann::json j;
  j["resolution_bp"] = resolution_;
  j["chromosomes"] = nlohmann::json::array();
  for (const auto& c : chromosomes_) j["chromosomes"].push_back({{"name", c.name}, {"length_bp", c.length_bp}});
  return j;
}

GenomeSpec GenomeSpec::from_json(const nlohmann::json& j) {
  try {
    std::vector<Chromosome> chroms;
    for (const auto& c : j.at("chromosomes")) {
      chroms.push_back({c.at("name").get<std::string>(), c.at("length_bp").get<bp_t>()});
    }
    return GenomeSpec(std::move(chroms), j.at("resolution_bp").get<bp_t>());
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("genome spec: ") + e.what());
  }
}

GenomeSpec GenomeSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("genome spec: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("genome spec " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

bool operator==(const GenomeSpec& a, const GenomeSpec& b) {
  return a.resolution_ == b.resolution_ && a.chromosomes_ == b.chromosomes_;
}

std::size_t bp_to_bin(double pos_bp, const GenomeSpec& spec, std::size_t chrom) {
  const auto len = static_cast<double>(spec.length(chrom));
  if (!(pos_bp >= 0.0 && pos_bp <= len)) {
    std::ostringstream msg;
    msg << "bp_to_bin: position " << pos_bp << " outside [0, " << len << "] on " << spec.name(chrom);
    throw DomainError(msg.str());
  }
  const auto bin = static_cast<std::size_t>(std::floor(pos_bp / static_cast<double>(spec.resolution())));
  return std::min(bin, spec.bins(chrom) - 1);
}

double bin_to_bp(std::size_t bin, const GenomeSpec& spec) {
  return (static_cast<double>(bin) + 0.5) * static_cast<double>(spec.resolution());
}

std::pair<std::size_t, std::size_t> block_shape(const GenomeSpec& spec, std::size_t i, std::size_t j) {
  if (i == j) throw DomainError("block_shape: cis blocks are not modeled");
  return {spec.bins(i), spec.bins(j)};
}

CentromereVector sample_prior(const GenomeSpec& spec, Rng& rng) {
  CentromereVector theta(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    theta[i] = uniform(rng, 1.0, static_cast<double>(spec.length(i) - 1));
  }
  return theta;
}

bool in_prior_support(const GenomeSpec& spec, std::span<const double> theta) {
  if (theta.size() != spec.size()) return false;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!(theta[i] >= 1.0 && theta[i] <= static_cast<double>(spec.length(i) - 1))) return false;
  }
  return true;
}

double prior_logpdf(const GenomeSpec& spec, std::span<const double> theta) {
  return BoxPrior::from_genome(spec).log_pdf(theta);
}

BoxPrior BoxPrior::from_genome(const GenomeSpec& spec) { return {spec.prior_lower(), spec.prior_upper()}; }

BoxPrior BoxPrior::from_chromosome(const GenomeSpec& spec, std::size_t chrom) {
  return {{1.0}, {static_cast<double>(spec.length(chrom) - 1)}};
}

std::vector<double> BoxPrior::sample(Rng& rng) const {
  std::vector<double> theta(dim());
  for (std::size_t d = 0; d < dim(); ++d) theta[d] = uniform(rng, lower[d], upper[d]);
  return theta;
}

bool BoxPrior::contains(std::span<const double> theta) const {
  if (theta.size() != dim()) return false;
  for (std::size_t d = 0; d < dim(); ++d) {
    if (!(theta[d] >= lower[d] && theta[d] <= upper[d])) return false;
  }
  return true;
}

double BoxPrior::log_pdf(std::span<const double> theta) const {
  if (!contains(theta)) return -std::numeric_limits<double>::infinity();
  double lp = 0.0;
  for (std::size_t d = 0; d < dim(); ++d) lp -= std::log(upper[d] - lower[d]);
  return lp;
}

ContactMap::ContactMap(GenomeSpec genome) : genome_(std::move(genome)) {
  blocks_.reserve(genome_.pair_count());
  for (auto [i, j] : genome_.pairs()) blocks_.push_back(Block::Zero(genome_.bins(i), genome_.bins(j)));
}

Block& ContactMap::block(std::size_t i, std::size_t j) { return blocks_.at(genome_.pair_index(i, j)); }

const Block& ContactMap::block(std::size_t i, std::size_t j) const {
  return blocks_.at(genome_.pair_index(i, j));
}

Block ContactMap::oriented_block(std::size_t i, std::size_t j) const {
  if (i == j) throw DomainError("oriented_block: cis blocks are not modeled");
  if (i < j) return block(i, j);
  return block(j, i).transpose();
}

Eigen::MatrixXd ContactMap::assemble() const {
  const std::size_t n = genome_.total_bins();
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n, n);
  for (auto [i, j] : genome_.pairs()) {
    const Block& b = block(i, j);
    full.block(genome_.offset(i), genome_.offset(j), b.rows(), b.cols()) = b;
    full.block(genome_.offset(j), genome_.offset(i), b.cols(), b.rows()) = b.transpose();
  }
  return full;
}

ContactMap ContactMap::from_assembled(const GenomeSpec& genome, const Eigen::MatrixXd& full) {
  const auto n = static_cast<Eigen::Index>(genome.total_bins());
  if (full.rows() != n || full.cols() != n) throw DomainError("from_assembled: matrix does not match genome");
  ContactMap map(genome);
  for (auto [i, j] : genome.pairs()) {
    map.block(i, j) = full.block(genome.offset(i), genome.offset(j), genome.bins(i), genome.bins(j));
  }
  return map;
}

void ContactMap::validate() const {
  if (blocks_.size() != genome_.pair_count()) throw DomainError("contact map: wrong block count");
  for (auto [i, j] : genome_.pairs()) {
    const Block& b = block(i, j);
    if (static_cast<std::size_t>(b.rows()) != genome_.bins(i) ||
        static_cast<std::size_t>(b.cols()) != genome_.bins(j)) {
      throw DomainError("contact map: block (" + std::to_string(i) + "," + std::to_string(j) +
                        ") has the wrong shape");
    }
    if ((b.array() < 0.0).any() || !b.allFinite()) {
      throw DomainError("contact map: block (" + std::to_string(i) + "," + std::to_string(j) +
                        ") has negative or non-finite entries");
    }
  }
}

BlockRow extract_block_row(const ContactMap& map, std::size_t chrom) {
  BlockRow row;
  row.chromosome = chrom;
  for (std::size_t j = 0; j < map.genome().size(); ++j) {
    if (j == chrom) continue;
    row.partners.push_back(j);
    row.blocks.push_back(map.oriented_block(chrom, j));
  }
  return row;
}

GenomeSpec yeast_genome() {
  return GenomeSpec({{"chrI", 230218},
                     {"chrII", 813184},
                     {"chrIII", 316620},
                     {"chrIV", 1531933},
                     {"chrV", 576874},
                     {"chrVI", 270161},
                     {"chrVII", 1090940},
                     {"chrVIII", 562643},
                     {"chrIX", 439888},
                     {"chrX", 745751},
                     {"chrXI", 666816},
                     {"chrXII", 1078177},
                     {"chrXIII", 924431},
                     {"chrXIV", 784333},
                     {"chrXV", 1091291},
                     {"chrXVI", 948066}},
                    32000);
}

GenomeSpec yeast_small_genome() {
  const std::size_t first_three[] = {0, 1, 2};
  return yeast_genome().subset(first_three);
}

}  // namespace hicentro
