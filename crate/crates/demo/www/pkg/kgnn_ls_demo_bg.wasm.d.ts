/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_clamps: (a: number) => [number, number];
export const demo_cycle_clamp: (a: number, b: number) => [number, number, number];
export const demo_edges: (a: number) => [number, number];
export const demo_energy: (a: number) => number;
export const demo_entity_count: (a: number) => number;
export const demo_items: (a: number) => [number, number];
export const demo_new: (a: number) => [number, number, number];
export const demo_preferred_relation: (a: number) => number;
export const demo_relation_count: (a: number) => number;
export const demo_residual: (a: number) => number;
export const demo_set_weight: (a: number, b: number, c: number) => [number, number];
export const demo_solve: (a: number, b: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
