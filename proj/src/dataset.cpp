#include "ifdiff/dataset.h"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "ifdiff/errors.h"

namespace ifdiff {

namespace fs = std::filesystem;

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::vector<std::string> list_backbone_files(const std::string& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        if (ends_with(name, ".json") && !ends_with(name, ".graph.json")) out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

LoadedDataset load_dataset(const std::string& dir) {
    LoadedDataset out;
    for (const auto& path : list_backbone_files(dir)) {
        try {
            out.proteins.push_back(load_backbone(path));
        } catch (const ParseError& e) {
            out.skipped.push_back(e.what());
        }
    }
    return out;
}

std::vector<std::string> read_split_file(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        const auto e = line.find_last_not_of(" \t\r");
        ids.push_back(line.substr(b, e - b + 1));
    }
    return ids;
}

std::string cache_path(const std::string& cache_dir, const std::string& protein_id) {
    return (fs::path(cache_dir) / (protein_id + ".graph.json")).string();
}

ResidueGraph featurize_cached(const ProteinBackbone& backbone, int k, const std::string& cache_dir, std::ostream* log) {
    if (cache_dir.empty()) return featurize(backbone, k);
    const auto path = cache_path(cache_dir, backbone.id);
    std::error_code ec;
    if (fs::exists(path, ec)) {
        auto g = graph_from_json(read_file(path));
        if (g.k == k && g.n_nodes == static_cast<int>(backbone.size())) {
            if (log) {
                const auto stamp = fs::last_write_time(path, ec).time_since_epoch();
                (*log) << "[cache] hit " << backbone.id << " " << path << " mtime="
                       << std::chrono::duration_cast<std::chrono::nanoseconds>(stamp).count() << "\n";
            }
            return g;
        }
    }
    auto g = featurize(backbone, k);
    fs::create_directories(cache_dir, ec);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write graph cache: " + path);
    out << graph_to_json(g);
    if (log) (*log) << "[cache] wrote " << backbone.id << " " << path << "\n";
    return g;
}

std::vector<ResidueGraph> featurize_all(const std::vector<ProteinBackbone>& proteins, int k, const std::string& cache_dir,
                                        int jobs, std::ostream* log) {
    std::vector<ResidueGraph> out(proteins.size());
    const std::size_t n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(proteins.size(), 1));
    if (n_threads == 1) {
        for (std::size_t i = 0; i < proteins.size(); ++i) out[i] = featurize_cached(proteins[i], k, cache_dir, log);
        return out;
    }
    std::mutex log_mutex;
    std::vector<std::exception_ptr> errors(n_threads);
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < n_threads; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < proteins.size(); i += n_threads) {
                    std::ostringstream local;
                    out[i] = featurize_cached(proteins[i], k, cache_dir, log ? &local : nullptr);
                    if (log) {
                        std::lock_guard lock(log_mutex);
                        (*log) << local.str();
                    }
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

}  // namespace ifdiff
