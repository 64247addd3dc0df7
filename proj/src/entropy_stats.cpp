#include "toprokit/entropy_stats.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace toprokit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string tensor_name(const EntropyKey& k) {
    return "entropy_s" + std::to_string(k.scale) + "_l" + std::to_string(k.layer) + "_h" +
           std::to_string(k.head) + ".tprv";
}

}  // namespace

void EntropyMap::set(const EntropyKey& key, std::vector<double> entropies) {
    if (key.scale < 1 || key.scale > schedule_.size()) {
        throw std::out_of_range("EntropyMap: scale out of schedule range");
    }
    if (key.layer >= layers_ || key.head >= heads_) {
        throw std::out_of_range("EntropyMap: layer/head out of range");
    }
    if (entropies.size() != schedule_.tokens_at(key.scale)) {
        throw std::invalid_argument("EntropyMap: entropy vector length must be h_s*w_s");
    }
    for (double v : entropies) {
        if (!(v >= 0.0)) {
            throw std::invalid_argument("EntropyMap: entropies must be nonnegative");
        }
    }
    values_[key] = std::move(entropies);
}

const std::vector<double>& EntropyMap::get(const EntropyKey& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        throw std::out_of_range("EntropyMap: no data for (scale=" + std::to_string(key.scale) +
                                ", layer=" + std::to_string(key.layer) +
                                ", head=" + std::to_string(key.head) + ")");
    }
    return it->second;
}

bool EntropyMap::contains(const EntropyKey& key) const { return values_.count(key) != 0; }

void EntropyMap::save(const std::string& dir) const {
    fs::create_directories(dir);
    json manifest;
    manifest["format_version"] = 1;
    manifest["layers"] = layers_;
    manifest["heads"] = heads_;
    json sched = json::array();
    for (const auto& e : schedule_.entries) sched.push_back({e.h, e.w});
    manifest["schedule"] = sched;
    json tensors = json::array();
    for (const auto& [key, vals] : values_) {
        Matrix2D row(1, vals.size(), vals);
        const std::string name = tensor_name(key);
        matrix_to_file(row, (fs::path(dir) / name).string());
        tensors.push_back({{"scale", key.scale}, {"layer", key.layer}, {"head", key.head},
                           {"file", name}});
    }
    manifest["tensors"] = tensors;
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) {
        throw std::runtime_error("EntropyMap: failed to write manifest in " + dir);
    }
}

EntropyMap EntropyMap::load(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) {
        throw std::runtime_error("EntropyMap: missing manifest.json in " + dir);
    }
    json manifest = json::parse(in);
    std::vector<ScaleSchedule::Entry> entries;
    for (const auto& e : manifest.at("schedule")) {
        entries.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
    }
    EntropyMap map(ScaleSchedule(std::move(entries)), manifest.at("layers").get<std::size_t>(),
                   manifest.at("heads").get<std::size_t>());
    for (const auto& t : manifest.at("tensors")) {
        EntropyKey key{t.at("scale").get<std::size_t>(), t.at("layer").get<std::size_t>(),
                       t.at("head").get<std::size_t>()};
        Matrix2D m = matrix_from_file((fs::path(dir) / t.at("file").get<std::string>()).string());
        map.set(key, m.data());
    }
    return map;
}

std::vector<double> head_average(const EntropyMap& map, std::size_t scale, std::size_t layer) {
    const std::size_t heads = map.head_count();
    const std::size_t n = map.schedule().tokens_at(scale);
    std::vector<double> mean(n, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
        const auto& vals = map.get({scale, layer, h});  // throws if a head is missing
        for (std::size_t i = 0; i < n; ++i) mean[i] += vals[i];
    }
    for (double& v : mean) v /= static_cast<double>(heads);
    return mean;
}

double low_entropy_ratio(const std::vector<double>& entropies) {
    if (entropies.empty()) {
        throw std::invalid_argument("low_entropy_ratio: empty input");
    }
    double sum = 0.0;
    for (double v : entropies) sum += v;
    const double mean = sum / static_cast<double>(entropies.size());
    std::size_t below = 0;
    for (double v : entropies) {
        if (v < mean) ++below;
    }
    return static_cast<double>(below) / static_cast<double>(entropies.size());
}

std::vector<double> normalize_entropy(const std::vector<double>& entropies) {
    if (entropies.empty()) {
        throw std::invalid_argument("normalize_entropy: empty input");
    }
    double sum = 0.0;
    for (double v : entropies) {
        if (v < 0.0) {
            throw std::invalid_argument("normalize_entropy: entries must be nonnegative");
        }
        sum += v;
    }
    if (sum <= 0.0) {
        throw std::domain_error("normalize_entropy: zero-sum input");
    }
    std::vector<double> out(entropies.size());
    for (std::size_t i = 0; i < entropies.size(); ++i) out[i] = entropies[i] / sum;
    return out;
}

std::vector<double> normalize_entropy_or_uniform(const std::vector<double>& entropies) {
    try {
        return normalize_entropy(entropies);
    } catch (const std::domain_error&) {
        return std::vector<double>(entropies.size(), 1.0 / static_cast<double>(entropies.size()));
    }
}

ScaleStats scale_stats(const EntropyMap& map, std::size_t scale, std::size_t layer) {
    const std::vector<double> avg = head_average(map, scale, layer);
    double sum = 0.0;
    for (double v : avg) sum += v;
    ScaleStats st;
    st.scale = scale;
    st.token_count = avg.size();
    st.mean_entropy = sum / static_cast<double>(avg.size());
    st.low_entropy_ratio = low_entropy_ratio(avg);
    return st;
}

Matrix2D entropy_grid(const EntropyMap& map, std::size_t scale, std::size_t layer) {
    const auto& entry = map.schedule().at_scale(scale);
    std::vector<double> avg = head_average(map, scale, layer);
    if (avg.size() != entry.tokens()) {
        throw std::invalid_argument("entropy_grid: token count does not match h_s*w_s");
    }
    return Matrix2D(entry.h, entry.w, std::move(avg));
}

}  // namespace toprokit
