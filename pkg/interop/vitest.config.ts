import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // Conformance tests spawn Python and Node subprocesses per case.
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
