#include <cstdio>
#include <cstdlib>

// Exit code reported when a test process tries to open a socket.
constexpr int kSocketUsed = 86;

extern "C" int socket(int, int, int) {
  std::fputs("no_network: socket() called in a test that must stay offline\n", stderr);
  std::_Exit(kSocketUsed);
}
