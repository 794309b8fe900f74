import "@testing-library/jest-dom/vitest";

// jsdom has no object URLs; thumbnails fall back gracefully, but keep the
// API present so components can call revokeObjectURL unconditionally.
if (typeof URL.createObjectURL !== "function") {
  URL.createObjectURL = () => "blob:jsdom-fake";
  URL.revokeObjectURL = () => undefined;
}
