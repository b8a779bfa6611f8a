/* tslint:disable */
/* eslint-disable */

/**
 * Default normalized entropies used by the page.
 */
export function demo_c_tilde(): Float64Array;

/**
 * Gate values on an `n x n` grid, row-major with kappa over rows and p
 * over columns, both at cell centers.
 */
export function gate_grid(q: number, slope: number, n: number): Float64Array;

/**
 * Posterior `p(y=1 | x, xi)` over elapsed time for one click.
 *
 * Behavior times are in minutes after the click; a negative value means the
 * behavior never happens. Returns interleaved `(elapsed_secs, posterior)`
 * pairs on a log-spaced grid from one minute to past the attribution window.
 */
export function posterior_curve(prior: number, cart_min: number, favorite_min: number, purchase_min: number, beta: number, points: number): Float64Array;

/**
 * Window weights for the given normalized entropies.
 */
export function window_weights(c_tilde: Float64Array, beta: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly demo_c_tilde: () => [number, number];
    readonly gate_grid: (a: number, b: number, c: number) => [number, number];
    readonly posterior_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly window_weights: (a: number, b: number, c: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
