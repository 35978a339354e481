#include <iostream>

int main() {
  std::cout << "pgcn: placeholder\n";
  return 0;
}
