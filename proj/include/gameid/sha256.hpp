#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gameid {

std::string sha256_hex(const std::uint8_t* data, std::size_t size);
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_hex(const std::string& bytes);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace gameid
