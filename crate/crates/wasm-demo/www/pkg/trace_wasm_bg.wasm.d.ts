/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const demo_c_tilde: () => [number, number];
export const gate_grid: (a: number, b: number, c: number) => [number, number];
export const posterior_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
export const window_weights: (a: number, b: number, c: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
