#pragma once

#include <cstddef>
#include <cstdint>

namespace tapsb::detail {

/// Full-length blocking write/read on a socket or pipe; false on EOF or error.
bool write_all(int fd, const std::uint8_t* p, std::size_t n);
bool read_all(int fd, std::uint8_t* p, std::size_t n);

}  // namespace tapsb::detail
