#include <cstdio>

int main() {
  std::puts("sketchlab: command-line interface not wired up yet");
  return 2;
}
