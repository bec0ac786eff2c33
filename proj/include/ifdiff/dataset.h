#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ifdiff/backbone.h"
#include "ifdiff/featurizer.h"

namespace ifdiff {

// Sorted *.json files directly inside dir (cached graphs, *.graph.json, are skipped).
std::vector<std::string> list_backbone_files(const std::string& dir);

struct LoadedDataset {
    std::vector<ProteinBackbone> proteins;
    std::vector<std::string> skipped;  // "path: reason" for unparseable files
};

LoadedDataset load_dataset(const std::string& dir);

// One protein id per line; blank lines and '#' comments ignored.
std::vector<std::string> read_split_file(const std::string& path);

std::string cache_path(const std::string& cache_dir, const std::string& protein_id);

// Reuses <cache_dir>/<id>.graph.json when present with the same k, otherwise featurizes and
// writes it. An empty cache_dir disables caching. Cache activity is reported on `log`.
ResidueGraph featurize_cached(const ProteinBackbone& backbone, int k, const std::string& cache_dir, std::ostream* log);

// Featurizes proteins on `jobs` threads; output order matches input order.
std::vector<ResidueGraph> featurize_all(const std::vector<ProteinBackbone>& proteins, int k, const std::string& cache_dir,
                                        int jobs, std::ostream* log);

}  // namespace ifdiff
