/**
 * Workspace persistence: every edit lands in local storage, and the
 * workspace exports/imports as ProgramDoc JSON.
 */

import { Workspace, emptyWorkspace } from "./model.js";

const STORAGE_KEY = "nodeprim.workspace";

export interface StringStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export function saveWorkspace(ws: Workspace, store: StringStore): void {
  store.setItem(STORAGE_KEY, JSON.stringify(ws));
}

export function loadWorkspace(store: StringStore): Workspace {
  const raw = store.getItem(STORAGE_KEY);
  if (raw === null) return emptyWorkspace();
  try {
    const parsed = JSON.parse(raw) as Workspace;
    if (parsed && Array.isArray(parsed.behaviour) && Array.isArray(parsed.robots)
        && Array.isArray(parsed.launch)) {
      return parsed;
    }
  } catch {
    // fall through: corrupted state starts fresh
  }
  return emptyWorkspace();
}
