#pragma once

#include <filesystem>

#include "atars/corpus.hpp"

namespace testsupport {

// Writes a deterministic synthetic Train+Test corpus (items, reviews, gold
// aspects, hits) whose statistics reproduce the descriptor's published
// counts exactly. Stands in for the real annotated data, which cannot be
// bundled.
void generate_descriptor_corpus(const atars::corpus::DatasetDescriptor& descriptor,
                                const std::filesystem::path& out_dir);

}  // namespace testsupport
