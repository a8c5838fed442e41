#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace ropdf {

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

/// Comma-separated writer. The first line is `# manifest <hash>` when a hash
/// is given, followed by the column header.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header,
              const std::string& manifest_hash = {});
    void write_row(std::span<const double> values);
    void write_row(const std::vector<std::string>& cells);

private:
    std::ofstream out_;
    std::filesystem::path path_;
    std::size_t columns_;
};

}  // namespace ropdf
