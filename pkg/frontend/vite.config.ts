import { defineConfig } from "vitest/config";

// base "./" keeps asset paths relative so the bundle works when the hub
// serves it under /ui/.
export default defineConfig({
  base: "./",
  build: {
    outDir: "dist",
  },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
