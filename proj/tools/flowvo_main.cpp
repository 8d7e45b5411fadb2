#include <cstdio>

int main() {
  std::puts("flowvo cli placeholder");
  return 0;
}
