#include "util.hpp"

#include <fstream>
#include <iterator>

#include "cirgest/error.hpp"

namespace cirgest::detail {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) fail(ErrorCode::io, "write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    const auto b = read_bytes(path);
    return {b.begin(), b.end()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_bytes(path, {text.begin(), text.end()});
}

}  // namespace cirgest::detail
