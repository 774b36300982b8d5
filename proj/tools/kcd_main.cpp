#include <cstdio>

int main() {
  std::puts("kcd: cli not wired yet");
  return 0;
}
