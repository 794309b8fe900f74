import { createContext, useContext, useSyncExternalStore } from "react";

import { ApiClient } from "./api";
import { DashboardStore, type DashboardState } from "./jobFlow";

export interface AppServices {
  api: ApiClient;
  dashboard: DashboardStore;
}

/** Module-level singletons: dashboard state survives route changes. */
export function defaultServices(): AppServices {
  const api = new ApiClient("");
  return { api, dashboard: new DashboardStore(api) };
}

export const ServicesContext = createContext<AppServices | null>(null);

export function useServices(): AppServices {
  const ctx = useContext(ServicesContext);
  if (!ctx) throw new Error("ServicesContext is not provided");
  return ctx;
}

export function useDashboardState(): DashboardState {
  const { dashboard } = useServices();
  return useSyncExternalStore(
    (cb) => dashboard.subscribe(cb),
    () => dashboard.getState(),
  );
}
