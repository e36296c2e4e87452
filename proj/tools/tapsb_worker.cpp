// Worker process for the worker-pool executor: serves tasks over the
// socket inherited on --fd until the pool closes it.
#include <cstdlib>
#include <cstring>
#include <string>

#include <fmt/format.h>

#include "tapsb/ipc.hpp"

int main(int argc, char** argv) {
  int fd = -1;
  unsigned long index = 0;
  for (int i = 1; i + 1 < argc; i += 2) {
    if (std::strcmp(argv[i], "--fd") == 0) {
      fd = std::atoi(argv[i + 1]);
    } else if (std::strcmp(argv[i], "--index") == 0) {
      index = std::strtoul(argv[i + 1], nullptr, 10);
    }
  }
  if (fd < 0) {
    fmt::print(stderr, "usage: tapsb-worker --fd N --index I\n");
    return 2;
  }
  return tapsb::ipc::serve_worker(fd, static_cast<std::uint32_t>(index));
}
