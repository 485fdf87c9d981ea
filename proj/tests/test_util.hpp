#pragma once

#include <filesystem>
#include <fstream>
#include <string>

namespace test_util {

/// Fresh scratch directory under the test working directory.
inline std::string temp_dir(const std::string& name) {
    const auto path = std::filesystem::path("test_scratch") / name;
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
    return path.string();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace test_util
