#pragma once

#include <filesystem>

#include "atars/corpus.hpp"

namespace testsupport {

// Replays the fixed-mode extraction and utility pipeline over the toy
// corpus with the oracle backend and saves every served (prompt, response)
// pair as a cassette. The CLI's scripted backend can then run the same
// pipeline offline byte-for-byte.
void build_toy_cassette(const std::filesystem::path& toy_dir,
                        const std::filesystem::path& prompts_dir,
                        const std::filesystem::path& cassette_out);

}  // namespace testsupport
